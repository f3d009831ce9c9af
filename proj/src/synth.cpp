#include "defurnish/synth.hpp"

#include "defurnish/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

namespace defurnish {

std::string_view to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::Constant: return "constant";
    case TextureKind::Stripes: return "stripes";
    case TextureKind::Checker: return "checker";
    case TextureKind::Noise: return "noise";
  }
  return "constant";
}

TextureKind texture_kind_from_string(std::string_view s) {
  if (s == "constant") return TextureKind::Constant;
  if (s == "stripes") return TextureKind::Stripes;
  if (s == "checker") return TextureKind::Checker;
  if (s == "noise") return TextureKind::Noise;
  throw Error(ErrorKind::InvalidArgument, "unknown texture kind '" + std::string(s) + "'");
}

namespace {

std::array<double, 3> mix(const std::array<std::uint8_t, 3>& a, const std::array<std::uint8_t, 3>& b, double w) {
  return {a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1]), a[2] + w * (b[2] - a[2])};
}

double lattice(std::uint64_t seed, std::int64_t i, std::int64_t j) {
  return static_cast<double>(derive_seed(seed, i, j) >> 11) * 0x1.0p-53;
}

}  // namespace

std::array<double, 3> TextureSpec::color(double s, double t) const {
  switch (kind) {
    case TextureKind::Constant:
      return mix(color_a, color_b, 0.0);
    case TextureKind::Stripes: {
      const double a = deg_to_rad(angle);
      const double u = (s * std::cos(a) + t * std::sin(a)) / period;
      return mix(color_a, color_b, u - std::floor(u) < 0.5 ? 0.0 : 1.0);
    }
    case TextureKind::Checker: {
      const auto i = static_cast<std::int64_t>(std::floor(s / size));
      const auto j = static_cast<std::int64_t>(std::floor(t / size));
      return mix(color_a, color_b, ((i + j) % 2 + 2) % 2 == 0 ? 0.0 : 1.0);
    }
    case TextureKind::Noise: {
      const double x = s / size;
      const double y = t / size;
      const auto i = static_cast<std::int64_t>(std::floor(x));
      const auto j = static_cast<std::int64_t>(std::floor(y));
      auto smooth = [](double f) { return f * f * (3.0 - 2.0 * f); };
      const double fx = smooth(x - i);
      const double fy = smooth(y - j);
      const double v0 = lattice(seed, i, j) * (1 - fx) + lattice(seed, i + 1, j) * fx;
      const double v1 = lattice(seed, i, j + 1) * (1 - fx) + lattice(seed, i + 1, j + 1) * fx;
      return mix(color_a, color_b, v0 * (1 - fy) + v1 * fy);
    }
  }
  return mix(color_a, color_b, 0.0);
}

std::array<double, 3> TruthElement::color_at(const Vec3& p, const Eigen::Matrix3d& rotation) const {
  const Vec3 q = rotation.transpose() * p - origin;
  return texture.color(q.dot(axis_s), q.dot(axis_t));
}

const TruthElement* GroundTruth::find(FaceLabel label) const {
  for (const TruthElement& e : elements) {
    if (e.label == label) return &e;
  }
  return nullptr;
}

namespace {

int cells(double length, double edge) {
  return std::max(1, static_cast<int>(std::ceil(length / edge - 1e-9)));
}

struct ElementDef {
  TruthElement truth;
  int axis_s = 0;
  int axis_t = 1;
  int fixed_axis = 2;
  bool at_max = false;
};

struct AtlasRect {
  int x = 0;
  int y = 0;  // from the bottom
  int w = 0;
  int h = 0;
};

int next_pow2(int v) {
  int p = 1;
  while (p < v) p <<= 1;
  return p;
}

// Shelf packing of the source atlas; returns placements and the page size.
std::vector<AtlasRect> shelf_pack(const std::vector<std::array<int, 2>>& sizes, int margin, int& width, int& height) {
  long long area = 0;
  int widest = 0;
  for (const auto& s : sizes) {
    area += static_cast<long long>(s[0] + margin) * (s[1] + margin);
    widest = std::max(widest, s[0] + 2 * margin);
  }
  width = next_pow2(std::max(widest, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(area))))));
  std::vector<AtlasRect> rects;
  int x = margin;
  int y = margin;
  int shelf = 0;
  for (const auto& s : sizes) {
    if (x + s[0] + margin > width) {
      x = margin;
      y += shelf + margin;
      shelf = 0;
    }
    rects.push_back({x, y, s[0], s[1]});
    x += s[0] + margin;
    shelf = std::max(shelf, s[1]);
  }
  height = next_pow2(y + shelf + margin);
  return rects;
}

std::array<std::uint8_t, 3> to_rgb(const std::array<double, 3>& c) {
  std::array<std::uint8_t, 3> out{};
  for (int i = 0; i < 3; ++i) out[i] = static_cast<std::uint8_t>(std::clamp(std::lround(c[i]), 0L, 255L));
  return out;
}

}  // namespace

SynthRoom generate_room(const RoomSpec& spec) {
  const Vec3 L = spec.extents;
  if (!(L.minCoeff() > 0.0)) throw Error(ErrorKind::InvalidArgument, "room extents must be positive");
  if (!(spec.edge_length > 0.0)) throw Error(ErrorKind::InvalidArgument, "edge length must be positive");
  if (!(spec.source_density > 0.0)) throw Error(ErrorKind::InvalidArgument, "source density must be positive");
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const BoxObject& b = spec.objects[i];
    if (!(b.size.minCoeff() > 0.0) || (b.min.array() < -1e-12).any() ||
        ((b.min + b.size - L).array() > 1e-12).any()) {
      throw Error(ErrorKind::InvalidArgument, "object " + std::to_string(i) + " lies outside the room");
    }
  }
  const std::array<int, 3> n{cells(L.x(), spec.edge_length), cells(L.y(), spec.edge_length),
                             cells(L.z(), spec.edge_length)};
  const Eigen::Matrix3d R = Eigen::AngleAxisd(deg_to_rad(spec.rotation), Vec3::UnitZ()).toRotationMatrix();

  std::vector<ElementDef> defs;
  auto add_def = [&](FaceLabel label, std::string name, int s, int t, int fixed, bool at_max, const TextureSpec& tex) {
    ElementDef d;
    d.truth.label = label;
    d.truth.name = std::move(name);
    d.truth.axis_s = Vec3::Unit(s);
    d.truth.axis_t = Vec3::Unit(t);
    d.truth.inward = at_max ? Vec3(-Vec3::Unit(fixed)) : Vec3(Vec3::Unit(fixed));
    d.truth.texture = tex;
    d.axis_s = s;
    d.axis_t = t;
    d.fixed_axis = fixed;
    d.at_max = at_max;
    const Vec3 point = at_max ? Vec3(L(fixed) * Vec3::Unit(fixed)) : Vec3::Zero();
    d.truth.plane = canonicalize(Plane::through(R * point, R * d.truth.inward));
    defs.push_back(std::move(d));
  };
  add_def({2, 0}, "floor", 0, 1, 2, false, spec.floor);
  add_def({3, 0}, "ceiling", 0, 1, 2, true, spec.ceiling);
  add_def({1, 0}, "wall_x0", 1, 2, 0, false, spec.wall);
  add_def({1, 1}, "wall_x1", 1, 2, 0, true, spec.wall);
  add_def({1, 2}, "wall_y0", 0, 2, 1, false, spec.wall);
  add_def({1, 3}, "wall_y1", 0, 2, 1, true, spec.wall);

  // Source atlas: one chart per element, one small swatch per object.
  const double d = spec.source_density;
  std::vector<std::array<int, 2>> sizes;
  for (const ElementDef& e : defs) {
    sizes.push_back({static_cast<int>(std::ceil(L(e.axis_s) * d)), static_cast<int>(std::ceil(L(e.axis_t) * d))});
  }
  for (std::size_t i = 0; i < spec.objects.size(); ++i) sizes.push_back({8, 8});
  int W = 0;
  int H = 0;
  const int margin = 4;
  const std::vector<AtlasRect> rects = shelf_pack(sizes, margin, W, H);
  auto atlas = std::make_shared<TextureImage>(W, H, 3, 0);
  for (std::size_t e = 0; e < defs.size(); ++e) {
    const AtlasRect& r = rects[e];
    for (int yu = std::max(0, r.y - margin); yu < std::min(H, r.y + r.h + margin); ++yu) {
      for (int x = std::max(0, r.x - margin); x < std::min(W, r.x + r.w + margin); ++x) {
        const double s = (x + 0.5 - r.x) / d;
        const double t = (yu + 0.5 - r.y) / d;
        atlas->set_rgb(x, H - 1 - yu, to_rgb(defs[e].truth.texture.color(s, t)));
      }
    }
  }
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const AtlasRect& r = rects[defs.size() + i];
    const std::array<std::uint8_t, 3> c{static_cast<std::uint8_t>(70 + 30 * (i % 4)), 60, 45};
    for (int yu = r.y; yu < r.y + r.h; ++yu) {
      for (int x = r.x; x < r.x + r.w; ++x) atlas->set_rgb(x, H - 1 - yu, c);
    }
  }

  LabeledMesh room;
  room.textures.push_back(atlas);
  std::map<std::array<int, 3>, std::uint32_t> grid_vertex;
  auto vertex = [&](std::array<int, 3> g) {
    auto it = grid_vertex.find(g);
    if (it != grid_vertex.end()) return it->second;
    const Vec3 p(L.x() * g[0] / n[0], L.y() * g[1] / n[1], L.z() * g[2] / n[2]);
    room.vertices.push_back(R * p);
    const auto idx = static_cast<std::uint32_t>(room.vertices.size() - 1);
    grid_vertex.emplace(g, idx);
    return idx;
  };
  for (std::size_t e = 0; e < defs.size(); ++e) {
    const ElementDef& def = defs[e];
    const AtlasRect& r = rects[e];
    const bool flip = def.truth.axis_s.cross(def.truth.axis_t).dot(def.truth.inward) < 0.0;
    auto uv_of = [&](std::array<int, 3> g) {
      const double s = L(def.axis_s) * g[def.axis_s] / n[def.axis_s];
      const double t = L(def.axis_t) * g[def.axis_t] / n[def.axis_t];
      return Vec2((r.x + s * d) / W, (r.y + t * d) / H);
    };
    for (int a = 0; a < n[def.axis_s]; ++a) {
      for (int b = 0; b < n[def.axis_t]; ++b) {
        std::array<std::array<int, 3>, 4> q;
        for (int k = 0; k < 4; ++k) {
          q[k][def.fixed_axis] = def.at_max ? n[def.fixed_axis] : 0;
          q[k][def.axis_s] = a + (k == 1 || k == 2 ? 1 : 0);
          q[k][def.axis_t] = b + (k >= 2 ? 1 : 0);
        }
        std::array<std::array<int, 3>, 6> corners{q[0], q[1], q[2], q[0], q[2], q[3]};
        for (int tri = 0; tri < 2; ++tri) {
          std::array<std::array<int, 3>, 3> c{corners[3 * tri], corners[3 * tri + 1], corners[3 * tri + 2]};
          if (flip) std::swap(c[1], c[2]);
          room.add_face({vertex(c[0]), vertex(c[1]), vertex(c[2])}, def.truth.label, false,
                        CornerUvs{uv_of(c[0]), uv_of(c[1]), uv_of(c[2])});
        }
      }
    }
  }

  SynthRoom out;
  for (const ElementDef& def : defs) out.truth.elements.push_back(def.truth);
  out.truth.rotation = R;
  out.truth.empty_room = room;

  // Delete structural faces hidden inside objects.
  std::vector<std::uint32_t> visible;
  for (std::uint32_t f = 0; f < room.face_count(); ++f) {
    const Vec3 c = R.transpose() * room.centroid(f);
    bool hidden = false;
    for (const BoxObject& b : spec.objects) {
      const Vec3 hi = b.min + b.size;
      hidden = hidden || ((c.array() >= b.min.array() - 1e-9).all() && (c.array() <= hi.array() + 1e-9).all());
    }
    if (!hidden) visible.push_back(f);
  }
  LabeledMesh furnished = visible.size() == room.face_count() ? room : extract_faces(room, visible);

  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    const BoxObject& box = spec.objects[i];
    const FaceLabel label{box.class_id, static_cast<int>(i)};
    const AtlasRect& r = rects[defs.size() + i];
    const Vec2 swatch((r.x + 4.0) / W, (r.y + 4.0) / H);
    const std::array<int, 3> m{cells(box.size.x(), spec.edge_length), cells(box.size.y(), spec.edge_length),
                               cells(box.size.z(), spec.edge_length)};
    std::map<std::array<int, 3>, std::uint32_t> local;
    auto bv = [&](std::array<int, 3> g) {
      auto it = local.find(g);
      if (it != local.end()) return it->second;
      const Vec3 p = box.min + Vec3(box.size.x() * g[0] / m[0], box.size.y() * g[1] / m[1], box.size.z() * g[2] / m[2]);
      furnished.vertices.push_back(R * p);
      const auto idx = static_cast<std::uint32_t>(furnished.vertices.size() - 1);
      local.emplace(g, idx);
      return idx;
    };
    for (int fixed = 0; fixed < 3; ++fixed) {
      const int s = (fixed + 1) % 3;
      const int t = (fixed + 2) % 3;
      for (int side = 0; side < 2; ++side) {
        // s x t = +fixed, which points outward on the max side.
        const bool flip = side == 0;
        for (int a = 0; a < m[s]; ++a) {
          for (int b = 0; b < m[t]; ++b) {
            std::array<std::array<int, 3>, 4> q;
            for (int k = 0; k < 4; ++k) {
              q[k][fixed] = side == 0 ? 0 : m[fixed];
              q[k][s] = a + (k == 1 || k == 2 ? 1 : 0);
              q[k][t] = b + (k >= 2 ? 1 : 0);
            }
            std::array<std::array<int, 3>, 6> corners{q[0], q[1], q[2], q[0], q[2], q[3]};
            for (int tri = 0; tri < 2; ++tri) {
              std::array<std::array<int, 3>, 3> c{corners[3 * tri], corners[3 * tri + 1], corners[3 * tri + 2]};
              if (flip) std::swap(c[1], c[2]);
              furnished.add_face({bv(c[0]), bv(c[1]), bv(c[2])}, label, false, CornerUvs{swatch, swatch, swatch});
            }
          }
        }
      }
    }
  }
  out.furnished = std::move(furnished);
  return out;
}

RoomSpec standard_room_spec(std::uint64_t seed) {
  RoomSpec spec;
  spec.extents = Vec3(5.0, 4.0, 2.5);
  spec.edge_length = 0.0583;
  spec.seed = seed;
  spec.objects = {
      {Vec3(0.0, 1.5, 0.0), Vec3(0.6, 1.0, 1.2), 13},   // against a wall
      {Vec3(2.0, 1.8, 0.0), Vec3(1.0, 0.7, 0.75), 11},  // free standing
      {Vec3(3.9, 0.0, 0.0), Vec3(1.1, 0.8, 0.8), 12},   // in a corner
  };
  return spec;
}

}  // namespace defurnish
