#include "defurnish/atlas.hpp"

#include "defurnish/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <optional>

namespace defurnish {

void PackParams::check() const {
  if (gutter < 1) throw Error(ErrorKind::InvalidArgument, "gutter must be >= 1");
  if (max_atlas_side < 1 || (max_atlas_side & (max_atlas_side - 1)) != 0) {
    throw Error(ErrorKind::InvalidArgument, "max_atlas_side must be a power of two");
  }
}

namespace {

int next_pow2(int v) {
  int p = 1;
  while (p < v) p *= 2;
  return p;
}

struct Segment {
  int x;
  int y;
  int width;
};

struct Rect {
  int x;
  int y;
  int width;
  int height;
};

// Skyline bottom-left packer. Gaps left below the skyline go to a waste list
// that later boxes try first (lowest, then leftmost fit).
class Skyline {
 public:
  Skyline(int width, int height) : width_(width), height_(height), segments_{{0, 0, width}} {}

  std::optional<std::array<int, 2>> insert(int w, int h) {
    // Candidates: left-aligned on a segment start or right-aligned on a segment end.
    std::vector<int> xs;
    for (const Segment& s : segments_) {
      xs.push_back(s.x);
      if (s.x + s.width - w >= 0) xs.push_back(s.x + s.width - w);
    }
    bool found = false;
    int best_y = 0;
    int best_x = 0;
    for (int x : xs) {
      if (x + w > width_) continue;
      int y = 0;
      for (const Segment& s : segments_) {
        if (s.x >= x + w) break;
        if (s.x + s.width > x) y = std::max(y, s.y);
      }
      if (y + h > height_) continue;
      if (!found || y < best_y || (y == best_y && x < best_x)) {
        found = true;
        best_y = y;
        best_x = x;
      }
    }
    // A free rect below the skyline wins when it is at least as low.
    const std::optional<std::size_t> hole = find_waste(w, h);
    if (hole && (!found || waste_[*hole].y < best_y || (waste_[*hole].y == best_y && waste_[*hole].x < best_x))) {
      const Rect r = waste_[*hole];
      carve({r.x, r.y, w, h});
      return std::array<int, 2>{r.x, r.y};
    }
    if (!found) return std::nullopt;
    place(best_x, best_y, w, h);
    return std::array<int, 2>{best_x, best_y};
  }

 private:
  std::optional<std::size_t> find_waste(int w, int h) const {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < waste_.size(); ++i) {
      const Rect& r = waste_[i];
      if (r.width < w || r.height < h) continue;
      if (!best || r.y < waste_[*best].y || (r.y == waste_[*best].y && r.x < waste_[*best].x)) best = i;
    }
    return best;
  }

  // Maximal free rectangles: split every rect the used box overlaps, then drop contained ones.
  void carve(const Rect& used) {
    std::vector<Rect> next;
    for (const Rect& f : waste_) {
      if (used.x >= f.x + f.width || used.x + used.width <= f.x || used.y >= f.y + f.height ||
          used.y + used.height <= f.y) {
        next.push_back(f);
        continue;
      }
      if (used.x > f.x) next.push_back({f.x, f.y, used.x - f.x, f.height});
      if (used.x + used.width < f.x + f.width) {
        next.push_back({used.x + used.width, f.y, f.x + f.width - used.x - used.width, f.height});
      }
      if (used.y > f.y) next.push_back({f.x, f.y, f.width, used.y - f.y});
      if (used.y + used.height < f.y + f.height) {
        next.push_back({f.x, used.y + used.height, f.width, f.y + f.height - used.y - used.height});
      }
    }
    waste_ = std::move(next);
    prune();
  }

  void prune() {
    auto inside = [](const Rect& a, const Rect& b) {
      return a.x >= b.x && a.y >= b.y && a.x + a.width <= b.x + b.width && a.y + a.height <= b.y + b.height;
    };
    std::vector<Rect> kept;
    for (std::size_t i = 0; i < waste_.size(); ++i) {
      bool drop = false;
      for (std::size_t j = 0; j < waste_.size() && !drop; ++j) {
        if (i == j || !inside(waste_[i], waste_[j])) continue;
        // Identical rects: keep the first.
        drop = !inside(waste_[j], waste_[i]) || j < i;
      }
      if (!drop) kept.push_back(waste_[i]);
    }
    waste_ = std::move(kept);
  }

  void place(int x, int y, int w, int h) {
    std::vector<Segment> next;
    std::vector<Rect> gaps;
    const int end = x + w;
    for (const Segment& s : segments_) {
      const int s_end = s.x + s.width;
      if (s_end <= x || s.x >= end) {
        next.push_back(s);
        continue;
      }
      const int lo = std::max(s.x, x);
      const int hi = std::min(s_end, end);
      gaps.push_back({lo, s.y, hi - lo, 0});
      if (s.x < x) next.push_back({s.x, s.y, x - s.x});
      if (s_end > end) next.push_back({end, s.y, s_end - end});
    }
    // Every run of covered segments leaves a free rect under the box.
    for (std::size_t i = 0; i < gaps.size(); ++i) {
      int floor_y = 0;
      for (std::size_t j = i; j < gaps.size(); ++j) {
        floor_y = std::max(floor_y, gaps[j].y);
        if (floor_y < y) waste_.push_back({gaps[i].x, floor_y, gaps[j].x + gaps[j].width - gaps[i].x, y - floor_y});
      }
    }
    if (!gaps.empty()) prune();
    next.push_back({x, y + h, w});
    std::sort(next.begin(), next.end(), [](const Segment& a, const Segment& b) { return a.x < b.x; });
    segments_.clear();
    for (const Segment& s : next) {
      if (!segments_.empty() && segments_.back().y == s.y) {
        segments_.back().width += s.width;
      } else {
        segments_.push_back(s);
      }
    }
  }

  int width_;
  int height_;
  std::vector<Segment> segments_;
  std::vector<Rect> waste_;
};

// Places items in order; returns placements for the items that fit.
std::vector<std::optional<std::array<int, 2>>> skyline_pack(const std::vector<std::array<int, 2>>& boxes,
                                                            const std::vector<std::size_t>& order, int width,
                                                            int height, bool stop_on_miss) {
  Skyline sky(width, height);
  std::vector<std::optional<std::array<int, 2>>> out(boxes.size());
  for (std::size_t i : order) {
    out[i] = sky.insert(boxes[i][0], boxes[i][1]);
    if (!out[i] && stop_on_miss) break;
  }
  return out;
}

}  // namespace

AtlasLayout pack_rectangles(const std::vector<PackItem>& items, const PackParams& params) {
  params.check();
  const int g = params.gutter;
  const int max_side = params.max_atlas_side;
  AtlasLayout layout;
  layout.gutter = g;
  layout.placements.resize(items.size());
  if (items.empty()) return layout;

  std::vector<std::array<int, 2>> boxes(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].width < 1 || items[i].height < 1) throw Error(ErrorKind::InvalidArgument, "chart size must be positive");
    const long long ew = static_cast<long long>(items[i].width) + 2LL * g;
    const long long eh = static_cast<long long>(items[i].height) + 2LL * g;
    if (ew > max_side || eh > max_side) {
      throw Error(ErrorKind::ChartTooLarge, "chart " + std::to_string(i) + " (" + std::to_string(items[i].width) + "x" +
                                                std::to_string(items[i].height) + ") plus gutter exceeds " +
                                                std::to_string(max_side));
    }
    boxes[i] = {static_cast<int>(ew), static_cast<int>(eh)};
  }
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (items[a].height != items[b].height) return items[a].height > items[b].height;
    if (items[a].width != items[b].width) return items[a].width > items[b].width;
    if (items[a].element != items[b].element) return items[a].element < items[b].element;
    if (items[a].component != items[b].component) return items[a].component < items[b].component;
    return a < b;
  });

  // Smallest power-of-two page (grown alternately) that holds the subset.
  auto pack_page = [&](const std::vector<std::size_t>& subset) -> std::optional<std::pair<AtlasPage, std::vector<std::optional<std::array<int, 2>>>>> {
    int w = 1;
    int h = 1;
    long long area = 0;
    for (std::size_t i : subset) {
      w = std::max(w, next_pow2(boxes[i][0]));
      h = std::max(h, next_pow2(boxes[i][1]));
      area += static_cast<long long>(boxes[i][0]) * boxes[i][1];
    }
    // Candidate shapes by increasing area, squarest first, then wider first.
    std::vector<AtlasPage> shapes;
    for (int sw = w; sw <= max_side; sw *= 2) {
      for (int sh = h; sh <= max_side; sh *= 2) {
        if (static_cast<long long>(sw) * sh >= area) shapes.push_back({sw, sh});
      }
    }
    std::sort(shapes.begin(), shapes.end(), [](const AtlasPage& a, const AtlasPage& b) {
      const long long aa = static_cast<long long>(a.width) * a.height;
      const long long ba = static_cast<long long>(b.width) * b.height;
      if (aa != ba) return aa < ba;
      const int ad = std::abs(a.width - a.height);
      const int bd = std::abs(b.width - b.height);
      if (ad != bd) return ad < bd;
      return a.width > b.width;
    });
    for (const AtlasPage& shape : shapes) {
      auto placed = skyline_pack(boxes, subset, shape.width, shape.height, true);
      if (std::all_of(subset.begin(), subset.end(), [&](std::size_t i) { return placed[i].has_value(); })) {
        return std::make_pair(shape, std::move(placed));
      }
    }
    return std::nullopt;
  };

  std::vector<std::size_t> remaining = order;
  while (!remaining.empty()) {
    const int page_index = static_cast<int>(layout.pages.size());
    auto whole = pack_page(remaining);
    std::vector<std::size_t> deferred;
    AtlasPage page;
    std::vector<std::optional<std::array<int, 2>>> placed;
    if (whole) {
      page = whole->first;
      placed = std::move(whole->second);
    } else {
      if (!params.allow_multi_page) {
        throw Error(ErrorKind::AtlasOverflow, "charts do not fit in one " + std::to_string(max_side) + " page");
      }
      placed = skyline_pack(boxes, remaining, max_side, max_side, false);
      for (std::size_t i : remaining) {
        if (!placed[i]) deferred.push_back(i);
      }
      page = {max_side, max_side};
    }
    for (std::size_t i : remaining) {
      if (!placed[i]) continue;
      layout.placements[i] = {page_index, (*placed[i])[0] + g, (*placed[i])[1] + g, items[i].width, items[i].height};
    }
    layout.pages.push_back(page);
    remaining = std::move(deferred);
  }
  return layout;
}

AtlasLayout pack_charts(const std::vector<UvChart>& charts, const PackParams& params) {
  std::vector<PackItem> items;
  items.reserve(charts.size());
  for (const UvChart& c : charts) {
    if (c.texel_density <= 0.0) throw Error(ErrorKind::InvalidArgument, "chart coordinates are not in texels");
    const auto size = c.texel_size();
    items.push_back({size[0], size[1], c.element, c.component});
  }
  return pack_rectangles(items, params);
}

ComposedAtlas compose_atlas(const AtlasLayout& layout, const std::vector<ChartRaster>& rasters, int jobs) {
  if (rasters.size() != layout.placements.size()) {
    throw Error(ErrorKind::SizeMismatch, std::to_string(rasters.size()) + " rasters for " +
                                             std::to_string(layout.placements.size()) + " placements");
  }
  ComposedAtlas out;
  for (const AtlasPage& p : layout.pages) {
    out.pages.emplace_back(p.width, p.height, 3, 0);
    out.covered.emplace_back(static_cast<std::size_t>(p.width) * p.height, 0);
  }
  for (std::size_t i = 0; i < rasters.size(); ++i) {
    const Placement& pl = layout.placements[i];
    if (rasters[i].width() != pl.width || rasters[i].height() != pl.height) {
      throw Error(ErrorKind::SizeMismatch, "raster " + std::to_string(i) + " does not match its placement");
    }
  }
  const int g = layout.gutter;
  parallel_for(rasters.size(), jobs, [&](std::size_t i) {
    const Placement& pl = layout.placements[i];
    const ChartRaster& r = rasters[i];
    TextureImage& page = out.pages[pl.page];
    std::vector<std::uint8_t>& cov = out.covered[pl.page];
    const int H = page.height;
    // Expanded box in page rows (top down).
    const int bx0 = pl.x - g;
    const int bx1 = pl.x + pl.width + g;
    const int by0 = H - (pl.y + pl.height + g);
    const int by1 = H - (pl.y - g);
    for (int row = 0; row < r.height(); ++row) {
      for (int x = 0; x < r.width(); ++x) {
        if (r.at(x, row) == Coverage::Outside) continue;
        const int ax = pl.x + x;
        const int ay = H - pl.y - r.height() + row;
        page.set_rgb(ax, ay, r.color.rgb(x, row));
        cov[static_cast<std::size_t>(ay) * page.width + ax] = 1;
      }
    }
    std::vector<std::uint8_t> filled(static_cast<std::size_t>(bx1 - bx0) * (by1 - by0), 0);
    auto local = [&](int x, int y) -> std::uint8_t& { return filled[static_cast<std::size_t>(y - by0) * (bx1 - bx0) + (x - bx0)]; };
    for (int y = by0; y < by1; ++y) {
      for (int x = bx0; x < bx1; ++x) local(x, y) = cov[static_cast<std::size_t>(y) * page.width + x];
    }
    static constexpr int kOffsets[8][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}, {-1, -1}, {1, -1}, {-1, 1}, {1, 1}};
    for (int pass = 0; pass < g; ++pass) {
      std::vector<std::pair<std::array<int, 2>, std::array<std::uint8_t, 3>>> ring;
      for (int y = by0; y < by1; ++y) {
        for (int x = bx0; x < bx1; ++x) {
          if (local(x, y)) continue;
          for (const auto& o : kOffsets) {
            const int nx = x + o[0];
            const int ny = y + o[1];
            if (nx < bx0 || ny < by0 || nx >= bx1 || ny >= by1 || !local(nx, ny)) continue;
            ring.push_back({{x, y}, page.rgb(nx, ny)});
            break;
          }
        }
      }
      if (ring.empty()) break;
      for (const auto& [p, c] : ring) {
        page.set_rgb(p[0], p[1], c);
        local(p[0], p[1]) = 1;
      }
    }
  });
  return out;
}

LabeledMesh reproject(const LabeledMesh& mesh, const std::vector<UvChart>& charts, const AtlasLayout& layout,
                      const std::vector<std::shared_ptr<const TextureImage>>& pages) {
  if (charts.size() != layout.placements.size()) {
    throw Error(ErrorKind::SizeMismatch, "chart and placement counts differ");
  }
  if (pages.size() != layout.pages.size()) throw Error(ErrorKind::SizeMismatch, "page count differs from layout");
  LabeledMesh out = mesh;
  out.corner_uvs.assign(mesh.face_count(), missing_uvs());
  out.face_texture.assign(mesh.face_count(), 0);
  out.textures = pages;
  std::vector<std::uint8_t> placed(mesh.face_count(), 0);
  for (std::size_t c = 0; c < charts.size(); ++c) {
    const UvChart& chart = charts[c];
    const Placement& pl = layout.placements[c];
    const AtlasPage& page = layout.pages[pl.page];
    for (std::size_t k = 0; k < chart.face_ids.size(); ++k) {
      const std::uint32_t f = chart.face_ids[k];
      if (f >= mesh.face_count()) throw Error(ErrorKind::InconsistentInput, "chart face id out of range");
      CornerUvs uv;
      for (int j = 0; j < 3; ++j) {
        uv[j] = Vec2((chart.uvs[k][j].x() + pl.x) / page.width, (chart.uvs[k][j].y() + pl.y) / page.height);
      }
      out.corner_uvs[f] = uv;
      out.face_texture[f] = static_cast<std::uint32_t>(pl.page);
      placed[f] = 1;
    }
  }
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    if (!placed[f]) throw Error(ErrorKind::UnplacedFace, "face " + std::to_string(f) + " belongs to no chart");
  }
  return out;
}

double occupancy(const AtlasLayout& layout) {
  if (layout.placements.empty() || layout.pages.empty()) {
    throw Error(ErrorKind::InvalidArgument, "occupancy of an empty layout");
  }
  double used = 0.0;
  double total = 0.0;
  for (const Placement& p : layout.placements) used += static_cast<double>(p.width) * p.height;
  for (const AtlasPage& p : layout.pages) total += static_cast<double>(p.width) * p.height;
  return used / total;
}

}  // namespace defurnish
