#pragma once

#include "defurnish/image.hpp"
#include "defurnish/mesh.hpp"
#include "defurnish/synth.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

namespace defurnish {

struct ElementResidual {
  double rmse = 0.0;
  double max_abs = 0.0;
  std::size_t vertices = 0;
};

struct GeometricError {
  double rmse = 0.0;  // over new-face vertices, per element
  double max_abs = 0.0;
  std::size_t vertices = 0;
  std::map<FaceLabel, ElementResidual> per_element;
  std::size_t hole_loops = 0;  // closed chains of boundary edges
};

/// Plane residuals of new-face vertices against the planted planes.
/// Throws CorrespondenceFailure for new faces whose label has no truth element.
GeometricError geometric_error(const LabeledMesh& result, const GroundTruth& truth);

/// Number of closed boundary-edge loops (edges with one incident face).
std::size_t count_boundary_loops(const LabeledMesh& mesh);

struct TextureError {
  double mae = 0.0;                // mean abs channel error, 0..255
  std::optional<double> psnr_db;   // nullopt when the match is exact
  std::size_t samples = 0;
  std::size_t excluded = 0;        // samples on uncovered texels or unmapped faces
};

/// Random barycentric samples on new faces; atlas color (bilinear) vs the
/// analytic truth. `covered` (per page, row-major) marks texels written by a
/// chart; samples whose nearest texel is uncovered are excluded.
TextureError texture_error(const LabeledMesh& result, const GroundTruth& truth, int samples_per_face,
                           std::uint64_t seed, const std::vector<std::vector<std::uint8_t>>* covered = nullptr);

/// MetricsReport JSON. Values from a pipeline report (adjacency, stretch,
/// occupancy, runtimes) are copied when given.
nlohmann::json metrics_report(const GeometricError& geometry, const std::optional<TextureError>& texture,
                              const std::optional<nlohmann::json>& pipeline_report);

// Fixture files: <dir>/furnished.obj (+ mtl, atlas, labels), <dir>/truth.json, <dir>/truth_empty.ply.
void save_fixture(const SynthRoom& room, const std::filesystem::path& dir);
GroundTruth load_truth(const std::filesystem::path& truth_json, const ClassMap& class_map);

nlohmann::json texture_spec_to_json(const TextureSpec& spec);
TextureSpec texture_spec_from_json(const nlohmann::json& j);

}  // namespace defurnish
