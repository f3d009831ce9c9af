#pragma once

#include "defurnish/atlas.hpp"
#include "defurnish/config.hpp"
#include "defurnish/inpainting.hpp"
#include "defurnish/mesh.hpp"
#include "defurnish/reconstruction.hpp"
#include "defurnish/segmentation.hpp"
#include "defurnish/uv_mapping.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace defurnish {

inline constexpr int kDumpSchemaVersion = 1;

enum class Stage { Segment, Reconstruct, Unwrap, Inpaint, Pack };

std::string_view to_string(Stage stage);
Stage stage_from_string(std::string_view name);

struct RunOptions {
  int jobs = 1;
  int verbosity = 1;  // 0 quiet, 1 stage lines, 2 details
  std::ostream* log = nullptr;
};

struct StageOutcome {
  int exit_code = 0;
  nlohmann::json report;
};

struct UnwrapResult {
  std::vector<UvChart> charts;  // ordered by (element, component)
  std::vector<FaceLabel> fallback_elements;  // unwrapped per triangle after a fold-over
  std::vector<FaceLabel> unplaned_elements;  // charted through a least-squares plane
  std::vector<DistortionStats> distortion;   // per chart
  std::size_t distortion_failures = 0;
  double adjacency_ratio = 1.0;
};

/// Charts for every face: one per connected component of each element, texel scaled.
UnwrapResult unwrap_scene(const LabeledMesh& mesh, const std::vector<PlaneSegment>& segments,
                          const PipelineConfig& config, int jobs = 1);

/// Stage 1 from a mesh file; writes the segment dump into out_dir.
StageOutcome run_segment_stage(const std::filesystem::path& mesh_path,
                               const std::optional<std::filesystem::path>& labels_path, const PipelineConfig& config,
                               const std::filesystem::path& out_dir, const RunOptions& options = {});

/// One later stage from the previous stage's dump directory.
StageOutcome run_stage(Stage stage, const std::filesystem::path& input_dir, const PipelineConfig& config,
                       const std::filesystem::path& out_dir, const RunOptions& options = {});

/// All stages; dumps go to out_dir/<stage>/, the final report to out_dir/report.json.
StageOutcome run_pipeline(const std::filesystem::path& mesh_path,
                          const std::optional<std::filesystem::path>& labels_path, const PipelineConfig& config,
                          const std::filesystem::path& out_dir, const RunOptions& options = {});

/// Report without the wall-clock section, for comparisons.
nlohmann::json strip_timings(nlohmann::json report);

// Dump (de)serialization.
nlohmann::json segments_to_json(const std::vector<PlaneSegment>& segments);
std::vector<PlaneSegment> segments_from_json(const nlohmann::json& doc);
nlohmann::json charts_to_json(const std::vector<UvChart>& charts);
std::vector<UvChart> charts_from_json(const nlohmann::json& doc);
nlohmann::json layout_to_json(const AtlasLayout& layout, const std::vector<UvChart>& charts);
std::string charts_svg(const std::vector<UvChart>& charts);

/// Reads <dir>/manifest.json; throws MissingIntermediate or SchemaVersion.
nlohmann::json read_manifest(const std::filesystem::path& dir, Stage expected);

}  // namespace defurnish
