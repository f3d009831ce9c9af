#include "defurnish/uv_mapping.hpp"

#include "defurnish/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>

namespace defurnish {

ChartFrame orientation_frame(const Vec3& surface_normal, Orientation orientation, const Vec3& up_axis,
                             const Vec3& forward_axis) {
  const Vec3 n = surface_normal.normalized();
  const Vec3& ref = orientation == Orientation::Horizontal ? forward_axis : up_axis;
  const Vec3 proj = ref - ref.dot(n) * n;
  if (!(proj.norm() > 1e-9)) {
    throw Error(ErrorKind::DegenerateFrame, std::string(orientation == Orientation::Horizontal ? "forward" : "up") +
                                                " axis is parallel to the element normal");
  }
  ChartFrame frame;
  frame.normal = n;
  frame.v = proj.normalized();
  frame.u = frame.v.cross(n);
  return frame;
}

Vec2 UvChart::extent() const {
  Vec2 ext = Vec2::Zero();
  for (const CornerUvs& c : uvs) {
    for (const Vec2& p : c) ext = ext.cwiseMax(p);
  }
  return ext;
}

std::array<int, 2> UvChart::texel_size() const {
  const Vec2 ext = extent();
  return {std::max(1, static_cast<int>(std::ceil(ext.x() - 1e-9))),
          std::max(1, static_cast<int>(std::ceil(ext.y() - 1e-9)))};
}

std::vector<Edge> mark_semantic_seams(const LabeledMesh& mesh) {
  std::vector<Edge> seams;
  const FaceAdjacency adjacency = build_adjacency(mesh);
  for (const EdgeFaces& ef : adjacency.entries()) {
    bool seam = ef.boundary();
    for (std::size_t i = 1; i < ef.faces.size() && !seam; ++i) {
      seam = mesh.labels[ef.faces[i]] != mesh.labels[ef.faces[0]];
    }
    if (seam) seams.push_back(ef.edge);
  }
  return seams;
}

std::vector<UvChart> unwrap_element(const LabeledMesh& mesh, FaceLabel element,
                                    const std::vector<std::uint32_t>& faces, const ChartFrame& frame) {
  std::vector<std::uint32_t> sorted = faces;
  std::sort(sorted.begin(), sorted.end());
  std::map<std::uint32_t, std::size_t> slot;
  for (std::size_t i = 0; i < sorted.size(); ++i) slot[sorted[i]] = i;
  std::vector<std::size_t> parent(sorted.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
    return parent[i] == i ? i : parent[i] = find(parent[i]);
  };
  const FaceAdjacency adjacency = build_adjacency(mesh, sorted);
  for (const EdgeFaces& ef : adjacency.entries()) {
    for (std::size_t i = 1; i < ef.faces.size(); ++i) {
      const std::size_t a = find(slot[ef.faces[0]]);
      const std::size_t b = find(slot[ef.faces[i]]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::map<std::size_t, std::vector<std::uint32_t>> components;
  for (std::size_t i = 0; i < sorted.size(); ++i) components[find(i)].push_back(sorted[i]);

  std::vector<UvChart> charts;
  for (const auto& [root, members] : components) {
    UvChart chart;
    chart.element = element;
    chart.component = static_cast<int>(charts.size());
    chart.frame = frame;
    chart.face_ids = members;
    Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    for (std::uint32_t f : members) {
      CornerUvs c;
      for (int k = 0; k < 3; ++k) {
        c[k] = frame.project(mesh.corner(f, k));
        lo = lo.cwiseMin(c[k]);
      }
      if (!(cross2(c[0], c[1], c[2]) > 0.0)) {
        throw Error(ErrorKind::FoldOver, "face " + std::to_string(f) + " folds over in the element plane");
      }
      chart.uvs.push_back(c);
    }
    for (CornerUvs& c : chart.uvs) {
      for (Vec2& p : c) p -= lo;
    }
    chart.origin = lo;
    charts.push_back(std::move(chart));
  }
  return charts;
}

UvChart orient_chart(const UvChart& chart, Orientation orientation, const Vec3& up_axis, const Vec3& forward_axis) {
  const ChartFrame target = orientation_frame(chart.frame.normal, orientation, up_axis, forward_axis);
  const double scale = chart.texel_density > 0.0 ? chart.texel_density : 1.0;
  Eigen::Matrix2d R;
  R << chart.frame.u.dot(target.u), chart.frame.v.dot(target.u), chart.frame.u.dot(target.v),
      chart.frame.v.dot(target.v);
  UvChart out = chart;
  out.frame = target;
  out.orientation = orientation;
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  for (CornerUvs& c : out.uvs) {
    for (Vec2& p : c) {
      p = R * (p / scale + chart.origin);
      lo = lo.cwiseMin(p);
    }
  }
  for (CornerUvs& c : out.uvs) {
    for (Vec2& p : c) p = (p - lo) * scale;
  }
  out.origin = lo;
  return out;
}

DistortionStats compute_distortion(const LabeledMesh& mesh, const UvChart& chart) {
  const double scale = chart.texel_density > 0.0 ? chart.texel_density : 1.0;
  DistortionStats stats;
  stats.min = std::numeric_limits<double>::infinity();
  stats.max = 0.0;
  double weighted = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < chart.face_ids.size(); ++i) {
    const std::uint32_t f = chart.face_ids[i];
    const Vec3 e1 = mesh.corner(f, 1) - mesh.corner(f, 0);
    const Vec3 e2 = mesh.corner(f, 2) - mesh.corner(f, 0);
    const Vec3 n = e1.cross(e2);
    if (!(n.norm() > 1e-12 * e1.norm() * e2.norm())) {
      throw Error(ErrorKind::DegenerateTriangle, "face " + std::to_string(f) + " has zero 3D area");
    }
    const Vec3 x = e1.normalized();
    const Vec3 y = n.normalized().cross(x);
    Eigen::Matrix2d Q;
    Q << e1.norm(), e2.dot(x), 0.0, e2.dot(y);
    const Vec2 w1 = (chart.uvs[i][1] - chart.uvs[i][0]) / scale;
    const Vec2 w2 = (chart.uvs[i][2] - chart.uvs[i][0]) / scale;
    Eigen::Matrix2d W;
    W << w1.x(), w2.x(), w1.y(), w2.y();
    if (!(std::abs(W.determinant()) > 1e-12 * w1.norm() * w2.norm())) {
      throw Error(ErrorKind::DegenerateTriangle, "face " + std::to_string(f) + " has zero chart area");
    }
    const Eigen::Matrix2d J = W * Q.inverse();
    const double s = std::sqrt(J.squaredNorm() / 2.0);
    const double area = 0.5 * n.norm();
    stats.stretch.push_back(s);
    stats.min = std::min(stats.min, s);
    stats.max = std::max(stats.max, s);
    weighted += area * s;
    total += area;
  }
  if (stats.stretch.empty()) stats.min = 0.0;
  stats.mean = total > 0.0 ? weighted / total : 0.0;
  return stats;
}

std::vector<UvChart> assign_texel_density(std::vector<UvChart> charts, double density, int max_chart_texels) {
  if (!(density > 0.0)) throw Error(ErrorKind::InvalidArgument, "texel density must be positive");
  if (max_chart_texels < 1) throw Error(ErrorKind::InvalidArgument, "max_chart_texels must be at least 1");
  for (UvChart& chart : charts) {
    const double current = chart.texel_density > 0.0 ? chart.texel_density : 1.0;
    for (CornerUvs& c : chart.uvs) {
      for (Vec2& p : c) p /= current;
    }
    const double longest = chart.extent().maxCoeff();
    double effective = density;
    chart.downscaled = false;
    if (longest * density > max_chart_texels) {
      effective = max_chart_texels / longest;
      chart.downscaled = true;
    }
    for (CornerUvs& c : chart.uvs) {
      for (Vec2& p : c) p *= effective;
    }
    chart.texel_density = effective;
    chart.requested_density = density;
  }
  return charts;
}

double adjacency_preservation(const LabeledMesh& mesh, const std::vector<UvChart>& charts, double tolerance) {
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> chart_of(mesh.face_count(), kNone);
  std::vector<std::size_t> slot_of(mesh.face_count(), 0);
  std::set<FaceLabel> charted;
  for (std::size_t c = 0; c < charts.size(); ++c) {
    charted.insert(charts[c].element);
    for (std::size_t i = 0; i < charts[c].face_ids.size(); ++i) {
      chart_of[charts[c].face_ids[i]] = c;
      slot_of[charts[c].face_ids[i]] = i;
    }
  }
  auto uv_at = [&](std::uint32_t f, std::uint32_t vertex) -> std::optional<Vec2> {
    for (int k = 0; k < 3; ++k) {
      if (mesh.triangles[f][k] == vertex) return charts[chart_of[f]].uvs[slot_of[f]][k];
    }
    return std::nullopt;
  };
  std::size_t total = 0;
  std::size_t kept = 0;
  const FaceAdjacency adjacency = build_adjacency(mesh);
  for (const EdgeFaces& ef : adjacency.entries()) {
    if (ef.faces.size() != 2) continue;
    const std::uint32_t f = ef.faces[0];
    const std::uint32_t g = ef.faces[1];
    if (mesh.labels[f] != mesh.labels[g] || !charted.count(mesh.labels[f])) continue;
    ++total;
    if (chart_of[f] == kNone || chart_of[f] != chart_of[g]) continue;
    bool shared = true;
    for (std::uint32_t v : {ef.edge.a, ef.edge.b}) {
      const auto a = uv_at(f, v);
      const auto b = uv_at(g, v);
      shared = shared && a && b && (*a - *b).norm() <= tolerance;
    }
    if (shared) ++kept;
  }
  return total == 0 ? 1.0 : static_cast<double>(kept) / static_cast<double>(total);
}

}  // namespace defurnish
