#pragma once

#include "defurnish/image.hpp"
#include "defurnish/inpainting.hpp"
#include "defurnish/mesh.hpp"
#include "defurnish/uv_mapping.hpp"

#include <memory>
#include <vector>

namespace defurnish {

struct PackParams {
  int gutter = 4;
  int max_atlas_side = 8192;
  bool allow_multi_page = true;

  void check() const;
};

/// Rectangle to pack; the label breaks ties after height and width.
struct PackItem {
  int width = 1;
  int height = 1;
  FaceLabel element;
  int component = 0;
};

/// Chart raster origin in texels, v up from the bottom of its page.
struct Placement {
  int page = 0;
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

struct AtlasPage {
  int width = 0;
  int height = 0;
};

struct AtlasLayout {
  int gutter = 0;
  std::vector<AtlasPage> pages;
  std::vector<Placement> placements;  // one per input chart, same order
};

/// Skyline bottom-left packing; translation only.
AtlasLayout pack_rectangles(const std::vector<PackItem>& items, const PackParams& params);
AtlasLayout pack_charts(const std::vector<UvChart>& charts, const PackParams& params);

struct ComposedAtlas {
  std::vector<TextureImage> pages;
  std::vector<std::vector<std::uint8_t>> covered;  // per page, 1 where a chart texel was written
};

/// Blits covered raster texels, then dilates into each chart's gutter ring.
ComposedAtlas compose_atlas(const AtlasLayout& layout, const std::vector<ChartRaster>& rasters, int jobs = 1);

/// Writes atlas UVs for every face; throws UnplacedFace for faces outside all charts.
LabeledMesh reproject(const LabeledMesh& mesh, const std::vector<UvChart>& charts, const AtlasLayout& layout,
                      const std::vector<std::shared_ptr<const TextureImage>>& pages);

/// Chart bounding-box area over total page area.
double occupancy(const AtlasLayout& layout);

}  // namespace defurnish
