#pragma once

#include "defurnish/atlas.hpp"
#include "defurnish/cdt.hpp"
#include "defurnish/inpainting.hpp"
#include "defurnish/mesh.hpp"
#include "defurnish/segmentation.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace defurnish {

inline constexpr int kConfigSchemaVersion = 1;

struct PipelineConfig {
  ClassMap classes = ClassMap::defaults();
  Vec3 up_axis = Vec3::UnitZ();
  Vec3 forward_axis = Vec3::UnitY();
  RansacParams ransac;
  double vertical_angle = 30.0;
  double removal_padding = 0.02;
  double parallel_tol = 5.0;
  double snap_tolerance = 0.01;
  double weld_tolerance = 1e-6;
  CdtOptions cdt;
  double min_area = 1e-10;
  double texel_density = 256.0;
  int max_chart_texels = 8192;
  InpaintConfig inpaint;
  int max_concurrent_hooks = 1;
  double variance_warning = 60.0;
  std::optional<ExternalHook> hook;
  PackParams pack;
  std::uint64_t seed = 42;

  /// Throws InvalidArgument for out-of-range values.
  void check() const;

  bool operator==(const PipelineConfig&) const;
};

/// `key = value` lines; lines starting with `#` are comments. Missing keys keep defaults.
/// Any `class.<id>` entry replaces the whole default class table.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Every key, in a fixed order; parse_config(format_config(c)) == c.
std::string format_config(const PipelineConfig& config);

}  // namespace defurnish
