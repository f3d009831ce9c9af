#pragma once

#include "defurnish/error.hpp"
#include "defurnish/image.hpp"
#include "defurnish/mesh.hpp"
#include "defurnish/uv_mapping.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace defurnish {

enum class Coverage : std::uint8_t { Outside = 0, Reference = 1, Fill = 2 };

/// Per-chart raster. Row 0 is the top row; chart v points up.
struct ChartRaster {
  FaceLabel element;
  int component = 0;
  TextureImage color;
  std::vector<Coverage> coverage;  // width * height, row-major
  std::uint64_t seed = 0;

  int width() const { return color.width; }
  int height() const { return color.height; }
  Coverage at(int x, int y) const { return coverage[static_cast<std::size_t>(y) * color.width + x]; }
  std::size_t count(Coverage c) const;
};

/// Blank raster of the given size with every texel Outside.
ChartRaster make_raster(int width, int height);

struct InpaintConfig {
  int patch_size = 7;
  int pyramid_levels = 0;  // 0 = ceil(log2(min side / 32)), at least 1
  int iterations_per_level = 5;

  void check() const;
  int levels_for(int width, int height) const;
};

struct ExternalHook {
  /// Shell command with {texture}, {mask} and {output} placeholders.
  std::string command;
  double timeout_seconds = 300.0;
  std::filesystem::path working_directory;

  void check() const;
};

/// Texel centers covered by new faces become Fill (black); those covered by
/// old faces become Reference and sample the face's source texture.
/// Throws InconsistentInput for an old face without source UVs or texture.
ChartRaster rasterize_chart(const LabeledMesh& mesh, const UvChart& chart, Sampling sampling = Sampling::Bilinear);

/// Multiscale exemplar fill; only Fill texels change.
/// Throws InsufficientReference when there is no Reference texel.
ChartRaster inpaint_exemplar(const ChartRaster& raster, const InpaintConfig& config);

/// Runs the hook on PNG files in a fresh directory under DEFURNISH_TMPDIR
/// (or the system temp directory). Only Fill texels are taken from its output.
/// Throws CommandFailed (with stderr), Timeout or SizeMismatch.
ChartRaster inpaint_external(const ChartRaster& raster, const ExternalHook& hook);

struct ChartFailure {
  std::size_t index = 0;
  FaceLabel element;
  ErrorKind kind = ErrorKind::InvalidArgument;
  std::string message;
};

struct InpaintOutcome {
  std::vector<ChartRaster> rasters;
  std::vector<ChartFailure> failures;
  std::vector<std::string> warnings;
};

struct InpaintRunOptions {
  int jobs = 1;
  int max_concurrent_hooks = 1;
  /// Reference color standard deviation (0-255 scale) above which a warning is emitted.
  double variance_warning = 60.0;
};

/// Seeds each raster with derive_seed(global_seed, class, instance) and fills
/// it independently; failed charts keep their placeholder and are reported.
InpaintOutcome inpaint_all(std::vector<ChartRaster> rasters, const InpaintConfig& config,
                           const std::optional<ExternalHook>& hook, std::uint64_t global_seed,
                           const InpaintRunOptions& options = {});

}  // namespace defurnish
