#pragma once

#include "defurnish/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace defurnish {

/// 8-bit raster. Rows are stored top to bottom, as in image files; texture
/// coordinate v = 0 is the bottom row.
struct TextureImage {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  TextureImage() = default;
  TextureImage(int w, int h, int c = 3, std::uint8_t fill = 0);

  bool valid() const;
  std::uint8_t* texel(int x, int y) { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels; }
  const std::uint8_t* texel(int x, int y) const { return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels; }

  /// RGB of a texel; gray images are broadcast, alpha dropped.
  std::array<std::uint8_t, 3> rgb(int x, int y) const;
  void set_rgb(int x, int y, const std::array<std::uint8_t, 3>& c);

  bool operator==(const TextureImage&) const = default;
};

enum class Sampling { Nearest, Bilinear };

/// Samples at texture coordinate uv (v up), clamp-to-edge. Returns RGB in [0, 255].
std::array<double, 3> sample(const TextureImage& image, const Vec2& uv, Sampling mode);

/// Reads PNG or JPEG (by content). Throws FileNotFound / Parse.
TextureImage read_image(const std::filesystem::path& path);

/// Writes an 8-bit PNG with the image's channel count (1, 3 or 4). Throws Io.
void write_png(const TextureImage& image, const std::filesystem::path& path);

}  // namespace defurnish
