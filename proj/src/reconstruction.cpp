#include "defurnish/reconstruction.hpp"

#include "defurnish/error.hpp"
#include "defurnish/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <unordered_map>

namespace defurnish {

Line3 intersect_planes(const Plane& a, const Plane& b, double parallel_tol) {
  const Vec3 d = a.normal.cross(b.normal);
  const double s = d.norm();
  const double angle = rad_to_deg(std::asin(std::min(1.0, s)));
  if (!(angle >= parallel_tol) || s == 0.0) {
    throw Error(ErrorKind::NoIntersection, "planes are parallel within " + std::to_string(parallel_tol) + " degrees");
  }
  Eigen::Matrix<double, 2, 3> A;
  A.row(0) = a.normal.transpose();
  A.row(1) = b.normal.transpose();
  const Eigen::Matrix2d gram = A * A.transpose();
  const Eigen::Vector2d rhs(a.offset, b.offset);
  Line3 line;
  line.point = A.transpose() * gram.inverse() * rhs;
  line.direction = d / s;
  return line;
}

Vec3 intersect_three(const Plane& a, const Plane& b, const Plane& c) {
  Eigen::Matrix3d M;
  M.row(0) = a.normal.transpose();
  M.row(1) = b.normal.transpose();
  M.row(2) = c.normal.transpose();
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(M);
  const Vec3 sv = svd.singularValues();
  if (!(sv(2) > 0.0) || sv(0) / sv(2) > 1e6) {
    throw Error(ErrorKind::DegenerateCorner, "plane normals are rank deficient");
  }
  return M.fullPivLu().solve(Vec3(a.offset, b.offset, c.offset));
}

ElementFrame element_frame(const PlaneSegment& element, const Vec3& origin, const Vec3& up_axis,
                           const Vec3& forward_axis) {
  ElementFrame frame;
  frame.axes = orientation_frame(element.surface_normal(), element.orientation, up_axis, forward_axis);
  frame.origin = element.plane.project(origin);
  return frame;
}

namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) { return (static_cast<std::uint64_t>(a) << 32) | b; }

bool position_less(const Vec3& a, const Vec3& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

void rotate_to_smallest(const LabeledMesh& mesh, std::vector<std::uint32_t>& loop) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < loop.size(); ++i) {
    const Vec3& p = mesh.vertices[loop[i]];
    const Vec3& q = mesh.vertices[loop[best]];
    if (position_less(p, q) || (p == q && loop[i] < loop[best])) best = i;
  }
  std::rotate(loop.begin(), loop.begin() + static_cast<std::ptrdiff_t>(best), loop.end());
}

}  // namespace

std::vector<BoundaryLoop> extract_boundary_loops(const LabeledMesh& mesh, const std::vector<std::uint32_t>& faces,
                                                 FaceLabel element, const ElementFrame& frame) {
  std::unordered_map<std::uint64_t, int> count;
  for (std::uint32_t f : faces) {
    const Triangle& t = mesh.triangles[f];
    for (int k = 0; k < 3; ++k) {
      const Edge e = Edge::of(t[k], t[(k + 1) % 3]);
      ++count[edge_key(e.a, e.b)];
    }
  }
  std::map<std::uint32_t, std::vector<std::uint32_t>> outgoing;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> half_edges;
  for (std::uint32_t f : faces) {
    const Triangle& t = mesh.triangles[f];
    for (int k = 0; k < 3; ++k) {
      const std::uint32_t a = t[k];
      const std::uint32_t b = t[(k + 1) % 3];
      const Edge e = Edge::of(a, b);
      const int c = count[edge_key(e.a, e.b)];
      if (c > 2) {
        throw Error(ErrorKind::NonManifoldBoundary,
                    "edge " + std::to_string(e.a) + "-" + std::to_string(e.b) + " has " + std::to_string(c) + " faces");
      }
      if (c == 1) {
        outgoing[a].push_back(b);
        half_edges.emplace_back(a, b);
      }
    }
  }
  std::sort(half_edges.begin(), half_edges.end());
  std::set<std::pair<std::uint32_t, std::uint32_t>> used;
  std::map<std::uint32_t, Vec2> flat;
  auto pos2 = [&](std::uint32_t v) -> const Vec2& {
    auto it = flat.find(v);
    if (it == flat.end()) it = flat.emplace(v, frame.to_2d(mesh.vertices[v])).first;
    return it->second;
  };

  std::vector<BoundaryLoop> loops;
  for (const auto& start : half_edges) {
    if (used.count(start)) continue;
    used.insert(start);
    std::vector<std::uint32_t> loop{start.first};
    std::uint32_t prev = start.first;
    std::uint32_t cur = start.second;
    for (std::size_t guard = 0;; ++guard) {
      if (guard > half_edges.size()) throw Error(ErrorKind::OpenChain, "boundary walk did not terminate");
      std::optional<std::uint32_t> best;
      double best_angle = 0.0;
      const Vec2 back = pos2(prev) - pos2(cur);
      for (std::uint32_t next : outgoing[cur]) {
        const std::pair<std::uint32_t, std::uint32_t> he{cur, next};
        if (used.count(he) && he != start) continue;
        const Vec2 out = pos2(next) - pos2(cur);
        // Clockwise angle from the back direction to the outgoing one.
        double angle = std::atan2(out.x() * back.y() - out.y() * back.x(), out.dot(back));
        if (angle <= 0.0) angle += 2.0 * kPi;
        if (!best || angle < best_angle) {
          best = next;
          best_angle = angle;
        }
      }
      if (!best) {
        throw Error(ErrorKind::OpenChain, "boundary chain is open at vertex " + std::to_string(cur));
      }
      const std::pair<std::uint32_t, std::uint32_t> chosen{cur, *best};
      if (chosen == start) break;
      used.insert(chosen);
      loop.push_back(cur);
      prev = cur;
      cur = *best;
    }
    BoundaryLoop bl;
    bl.element = element;
    std::vector<Vec2> poly;
    poly.reserve(loop.size());
    for (std::uint32_t v : loop) poly.push_back(pos2(v));
    bl.signed_area = polygon_signed_area(poly);
    bl.perimeter = bl.signed_area > 0.0;
    if (!bl.perimeter) std::reverse(loop.begin(), loop.end());
    rotate_to_smallest(mesh, loop);
    bl.vertices = std::move(loop);
    loops.push_back(std::move(bl));
  }
  std::sort(loops.begin(), loops.end(), [&](const BoundaryLoop& a, const BoundaryLoop& b) {
    const Vec3& pa = mesh.vertices[a.vertices.front()];
    const Vec3& pb = mesh.vertices[b.vertices.front()];
    if (pa != pb) return position_less(pa, pb);
    return a.vertices < b.vertices;
  });
  return loops;
}

std::vector<BoundaryLoop> extract_hole_boundaries(const LabeledMesh& mesh, const std::vector<std::uint32_t>& faces,
                                                  FaceLabel element, const ElementFrame& frame) {
  std::vector<BoundaryLoop> holes;
  for (auto& loop : extract_boundary_loops(mesh, faces, element, frame)) {
    if (!loop.perimeter) holes.push_back(std::move(loop));
  }
  return holes;
}

double FrameLine::distance(const Vec2& q) const {
  const Vec2 r = q - point;
  return side * (direction.x() * r.y() - direction.y() * r.x());
}

HoleRegion clip_hole_region(HoleRegion region, const std::vector<FrameLine>& lines,
                            const std::vector<FrameCorner>& corners, double tolerance) {
  for (const FrameLine& line : lines) {
    auto& poly = region.polygon;
    bool crosses = false;
    for (const PolygonVertex& v : poly) crosses = crosses || line.distance(v.point) < -tolerance;
    if (!crosses) continue;
    std::vector<Segment2> kept;
    for (const Segment2& c : region.constraints) {
      const double da = line.distance(c.a);
      const double db = line.distance(c.b);
      if (da < -tolerance && db < -tolerance) continue;
      Segment2 piece = c;
      if (da < -tolerance) piece.a = c.a + (da / (da - db)) * (c.b - c.a);
      if (db < -tolerance) piece.b = c.a + (da / (da - db)) * (c.b - c.a);
      if ((piece.a - piece.b).norm() > tolerance) kept.push_back(piece);
    }
    region.constraints = std::move(kept);
    std::vector<PolygonVertex> out;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const PolygonVertex& cur = poly[i];
      const PolygonVertex& nxt = poly[(i + 1) % n];
      const double dc = line.distance(cur.point);
      const double dn = line.distance(nxt.point);
      const bool in_c = dc >= -tolerance;
      const bool in_n = dn >= -tolerance;
      if (in_c) out.push_back(cur);
      if (in_c != in_n && std::abs(dc) > tolerance && std::abs(dn) > tolerance) {
        const double t = dc / (dc - dn);
        PolygonVertex cut;
        cut.point = cur.point + t * (nxt.point - cur.point);
        out.push_back(cut);
      } else if (in_c != in_n && !in_c && std::abs(dn) <= tolerance) {
        // next vertex already sits on the line
      }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      const PolygonVertex& a = out[i];
      const PolygonVertex& b = out[(i + 1) % out.size()];
      if (out.size() >= 3 && std::abs(line.distance(a.point)) <= tolerance &&
          std::abs(line.distance(b.point)) <= tolerance && (a.point - b.point).norm() > tolerance) {
        region.constraints.push_back({a.point, b.point});
      }
    }
    poly = std::move(out);
    if (poly.size() < 3) throw Error(ErrorKind::EmptyRegion, "hole lies beyond the element extent");
  }
  // Constructed vertices: snap to corners, then lift.
  auto& poly = region.polygon;
  for (PolygonVertex& v : poly) {
    if (v.mesh_vertex) continue;
    for (const FrameCorner& c : corners) {
      if ((v.point - c.point).norm() <= std::max(tolerance, 1e-7)) {
        v.point = c.point;
        v.position = c.position;
        break;
      }
    }
  }
  for (Segment2& c : region.constraints) {
    for (Vec2* end : {&c.a, &c.b}) {
      for (const FrameCorner& k : corners) {
        if ((*end - k.point).norm() <= std::max(tolerance, 1e-7)) {
          *end = k.point;
          break;
        }
      }
    }
  }
  std::vector<PolygonVertex> dedup;
  for (const PolygonVertex& v : poly) {
    if (!dedup.empty() && (dedup.back().point - v.point).norm() <= 1e-12) continue;
    dedup.push_back(v);
  }
  while (dedup.size() > 1 && (dedup.front().point - dedup.back().point).norm() <= 1e-12) dedup.pop_back();
  std::vector<Vec2> pts;
  for (const PolygonVertex& v : dedup) pts.push_back(v.point);
  if (dedup.size() < 3 || std::abs(polygon_signed_area(pts)) <= 1e-18) {
    throw Error(ErrorKind::EmptyRegion, "hole lies beyond the element extent");
  }
  poly = std::move(dedup);
  return region;
}

FillPatch fill_hole_cdt(const HoleRegion& region, const ElementFrame& frame, FaceLabel element,
                        const CdtOptions& options) {
  std::vector<Vec2> pts;
  pts.reserve(region.polygon.size());
  for (const PolygonVertex& v : region.polygon) pts.push_back(v.point);
  const CdtResult cdt = triangulate_polygon(pts, region.constraints, options);
  FillPatch patch;
  patch.element = element;
  for (std::size_t i = 0; i < cdt.points.size(); ++i) {
    if (i < region.polygon.size()) {
      const PolygonVertex& v = region.polygon[i];
      patch.points.push_back(v.position ? *v.position : frame.to_3d(v.point));
      patch.mesh_vertex.push_back(v.mesh_vertex);
    } else {
      patch.points.push_back(frame.to_3d(cdt.points[i]));
      patch.mesh_vertex.push_back(std::nullopt);
    }
  }
  patch.triangles = cdt.triangles;
  return patch;
}

RemovalPlan plan_removal_order(const std::vector<ObjectBox>& boxes) {
  std::vector<std::size_t> parent(boxes.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
    return parent[i] == i ? i : parent[i] = find(parent[i]);
  };
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      if (boxes[i].overlaps(boxes[j])) parent[find(i)] = find(j);
    }
  }
  std::map<std::size_t, RemovalGroup> components;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    RemovalGroup& g = components[find(i)];
    g.boxes.push_back(boxes[i]);
    g.volume += boxes[i].volume();
  }
  RemovalPlan plan;
  for (auto& [root, group] : components) {
    std::sort(group.boxes.begin(), group.boxes.end(),
              [](const ObjectBox& a, const ObjectBox& b) { return a.label < b.label; });
    plan.groups.push_back(std::move(group));
  }
  std::sort(plan.groups.begin(), plan.groups.end(), [](const RemovalGroup& a, const RemovalGroup& b) {
    if (a.volume != b.volume) return a.volume < b.volume;
    return a.boxes.front().label < b.boxes.front().label;
  });
  return plan;
}

RemovalResult remove_object_faces(const LabeledMesh& mesh, const std::vector<ObjectBox>& boxes,
                                  const ClassMap& class_map) {
  std::set<FaceLabel> boxed;
  for (const ObjectBox& b : boxes) boxed.insert(b.label);
  RemovalResult result;
  std::vector<std::uint32_t> kept;
  kept.reserve(mesh.face_count());
  for (std::uint32_t f = 0; f < mesh.face_count(); ++f) {
    bool remove = boxed.count(mesh.labels[f]) != 0;
    if (!remove) {
      const Vec3 c = mesh.centroid(f);
      for (const ObjectBox& b : boxes) {
        if (b.contains(c)) {
          remove = true;
          break;
        }
      }
    }
    if (!remove) {
      kept.push_back(f);
      continue;
    }
    result.removed_faces.push_back(f);
    if (class_map.contains(mesh.labels[f].class_id) && class_map.is_structural(mesh.labels[f].class_id)) {
      result.removed_structural[mesh.labels[f]].push_back(f);
    }
  }
  result.mesh = result.removed_faces.empty() ? mesh : extract_faces(mesh, kept);
  return result;
}

VertexWelder::VertexWelder(std::vector<Vec3>* vertices, double tolerance)
    : vertices_(vertices), tolerance_(tolerance) {
  for (std::size_t i = 0; i < vertices_->size(); ++i) insert(static_cast<std::uint32_t>(i));
}

VertexWelder::Cell VertexWelder::cell_of(const Vec3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / tolerance_)),
          static_cast<std::int64_t>(std::floor(p.y() / tolerance_)),
          static_cast<std::int64_t>(std::floor(p.z() / tolerance_))};
}

void VertexWelder::insert(std::uint32_t index) { grid_[cell_of((*vertices_)[index])].push_back(index); }

std::uint32_t VertexWelder::weld(const Vec3& p) {
  const Cell c = cell_of(p);
  std::optional<std::uint32_t> best;
  double best_d = tolerance_;
  for (std::int64_t dx = -1; dx <= 1; ++dx) {
    for (std::int64_t dy = -1; dy <= 1; ++dy) {
      for (std::int64_t dz = -1; dz <= 1; ++dz) {
        auto it = grid_.find({c[0] + dx, c[1] + dy, c[2] + dz});
        if (it == grid_.end()) continue;
        for (std::uint32_t idx : it->second) {
          const double d = ((*vertices_)[idx] - p).norm();
          if (d <= best_d && (!best || d < best_d || idx < *best)) {
            best = idx;
            best_d = d;
          }
        }
      }
    }
  }
  if (best) return *best;
  vertices_->push_back(p);
  const auto index = static_cast<std::uint32_t>(vertices_->size() - 1);
  insert(index);
  return index;
}

namespace {

struct ElementContext {
  const PlaneSegment* segment = nullptr;
  ElementFrame frame;
  std::vector<FrameLine> lines;
  std::vector<FrameCorner> corners;
};

struct ElementWork {
  std::vector<FillPatch> patches;
  std::vector<std::uint32_t> absorbed;  // element faces enclosed by a fill region
  std::vector<ElementFailure> failures;
};

std::map<FaceLabel, std::vector<std::uint32_t>> faces_by_label(const LabeledMesh& mesh) {
  std::map<FaceLabel, std::vector<std::uint32_t>> out;
  for (std::uint32_t f = 0; f < mesh.face_count(); ++f) out[mesh.labels[f]].push_back(f);
  return out;
}

std::vector<ElementContext> build_contexts(const LabeledMesh& mesh, const std::vector<PlaneSegment>& segments,
                                           const ReconstructionOptions& options,
                                           std::vector<ElementFailure>& failures) {
  std::vector<int> owner(mesh.face_count(), -1);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    for (std::uint32_t f : segments[s].face_ids) {
      if (f < owner.size()) owner[f] = static_cast<int>(s);
    }
  }
  std::vector<std::set<int>> neighbors(segments.size());
  const FaceAdjacency adjacency = build_adjacency(mesh);
  for (const EdgeFaces& ef : adjacency.entries()) {
    for (std::size_t i = 0; i < ef.faces.size(); ++i) {
      for (std::size_t j = i + 1; j < ef.faces.size(); ++j) {
        const int a = owner[ef.faces[i]];
        const int b = owner[ef.faces[j]];
        if (a >= 0 && b >= 0 && a != b) {
          neighbors[a].insert(b);
          neighbors[b].insert(a);
        }
      }
    }
  }
  std::vector<ElementContext> contexts(segments.size());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const PlaneSegment& seg = segments[s];
    ElementContext& ctx = contexts[s];
    ctx.segment = &seg;
    Vec3 weighted = Vec3::Zero();
    double total = 0.0;
    for (std::uint32_t f : seg.face_ids) {
      const double a = mesh.area(f);
      weighted += a * mesh.centroid(f);
      total += a;
    }
    const Vec3 origin = total > 0.0 ? Vec3(weighted / total) : Vec3(seg.plane.normal * seg.plane.offset);
    try {
      ctx.frame = element_frame(seg, origin, options.up_axis, options.forward_axis);
    } catch (const Error& e) {
      failures.push_back({seg.label(), e.kind(), e.what()});
      ctx.segment = nullptr;
      continue;
    }
    for (int n : neighbors[s]) {
      FrameLine fl;
      fl.neighbor = segments[n].label();
      try {
        fl.line = intersect_planes(seg.plane, segments[n].plane, options.parallel_tol);
      } catch (const Error&) {
        continue;
      }
      fl.point = ctx.frame.to_2d(fl.line.point);
      fl.direction = ctx.frame.axes.project(fl.line.direction).normalized();
      double side = 0.0;
      for (std::uint32_t f : seg.face_ids) {
        const Vec2 r = ctx.frame.to_2d(mesh.centroid(f)) - fl.point;
        side += mesh.area(f) * (fl.direction.x() * r.y() - fl.direction.y() * r.x());
      }
      fl.side = side < 0.0 ? -1 : 1;
      ctx.lines.push_back(fl);
    }
    for (std::size_t i = 0; i < ctx.lines.size(); ++i) {
      for (std::size_t j = i + 1; j < ctx.lines.size(); ++j) {
        const PlaneSegment* a = nullptr;
        const PlaneSegment* b = nullptr;
        for (const PlaneSegment& other : segments) {
          if (other.label() == ctx.lines[i].neighbor) a = &other;
          if (other.label() == ctx.lines[j].neighbor) b = &other;
        }
        try {
          FrameCorner c;
          c.line_a = i;
          c.line_b = j;
          c.position = intersect_three(seg.plane, a->plane, b->plane);
          c.point = ctx.frame.to_2d(c.position);
          ctx.corners.push_back(c);
        } catch (const Error&) {
        }
      }
    }
  }
  return contexts;
}

PolygonVertex loop_vertex(const LabeledMesh& mesh, const ElementFrame& frame, std::uint32_t v) {
  PolygonVertex pv;
  pv.point = frame.to_2d(mesh.vertices[v]);
  pv.position = mesh.vertices[v];
  pv.mesh_vertex = v;
  return pv;
}

using Gate = std::function<bool(const std::vector<std::uint32_t>&, double margin)>;

double max_edge(const LabeledMesh& mesh, const std::vector<std::uint32_t>& loop) {
  double m = 0.0;
  for (std::size_t i = 0; i < loop.size(); ++i) {
    m = std::max(m, (mesh.vertices[loop[i]] - mesh.vertices[loop[(i + 1) % loop.size()]]).norm());
  }
  return m;
}

std::vector<Vec2> points_of(const std::vector<PolygonVertex>& poly) {
  std::vector<Vec2> pts;
  pts.reserve(poly.size());
  for (const PolygonVertex& v : poly) pts.push_back(v.point);
  return pts;
}

bool point_in_polygon(const std::vector<Vec2>& poly, const Vec2& p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) && p.x() < a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y())) {
      inside = !inside;
    }
  }
  return inside;
}

/// Splits a polygon that revisits mesh vertices into pieces without repeats.
std::vector<HoleRegion> split_at_repeats(const HoleRegion& region) {
  std::vector<std::vector<PolygonVertex>> pieces;
  std::vector<PolygonVertex> cur;
  for (const PolygonVertex& v : region.polygon) {
    auto same = [&](const PolygonVertex& o) { return v.mesh_vertex && o.mesh_vertex == v.mesh_vertex; };
    auto it = std::find_if(cur.begin(), cur.end(), same);
    if (it != cur.end()) {
      pieces.emplace_back(it, cur.end());
      cur.erase(it + 1, cur.end());
    } else {
      cur.push_back(v);
    }
  }
  pieces.push_back(std::move(cur));
  std::vector<HoleRegion> out;
  for (auto& piece : pieces) {
    if (piece.size() < 3) continue;
    HoleRegion r;
    r.notch = region.notch;
    r.polygon = std::move(piece);
    for (const Segment2& c : region.constraints) {
      auto has = [&](const Vec2& p) {
        return std::any_of(r.polygon.begin(), r.polygon.end(), [&](const PolygonVertex& v) { return v.point == p; });
      };
      if (has(c.a) && has(c.b)) r.constraints.push_back(c);
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Stretches of a perimeter that left the intersection lines, closed back along them.
std::vector<HoleRegion> perimeter_notches(const LabeledMesh& mesh, const BoundaryLoop& loop, const ElementContext& ctx,
                                          double snap, const Gate& gate) {
  std::vector<HoleRegion> regions;
  const auto& vs = loop.vertices;
  const std::size_t m = vs.size();
  if (ctx.lines.empty() || m < 3) return regions;
  std::vector<std::vector<std::size_t>> on(m);
  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2 q = ctx.frame.to_2d(mesh.vertices[vs[i]]);
    for (std::size_t l = 0; l < ctx.lines.size(); ++l) {
      if (std::abs(ctx.lines[l].distance(q)) <= snap) on[i].push_back(l);
    }
    if (!on[i].empty()) anchors.push_back(i);
  }
  if (anchors.size() < 2) return regions;
  const double margin = max_edge(mesh, vs);
  auto corner_between = [&](std::size_t la, std::size_t lb) -> const FrameCorner* {
    for (const FrameCorner& c : ctx.corners) {
      if ((c.line_a == la && c.line_b == lb) || (c.line_a == lb && c.line_b == la)) return &c;
    }
    return nullptr;
  };
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    const std::size_t ia = anchors[k];
    const std::size_t ib = anchors[(k + 1) % anchors.size()];
    std::vector<std::uint32_t> run;
    for (std::size_t i = (ia + 1) % m; i != ib; i = (i + 1) % m) run.push_back(vs[i]);
    std::vector<std::size_t> shared;
    std::set_intersection(on[ia].begin(), on[ia].end(), on[ib].begin(), on[ib].end(), std::back_inserter(shared));
    if (run.empty() && !shared.empty()) continue;
    std::vector<std::uint32_t> touched = run;
    touched.push_back(vs[ia]);
    touched.push_back(vs[ib]);
    if (!gate(touched, margin)) continue;

    std::vector<std::vector<const FrameCorner*>> paths;
    if (!shared.empty()) {
      paths.push_back({});
    } else {
      for (std::size_t la : on[ia]) {
        for (std::size_t lb : on[ib]) {
          if (const FrameCorner* c = corner_between(la, lb)) paths.push_back({c});
          for (std::size_t lm = 0; lm < ctx.lines.size(); ++lm) {
            if (lm == la || lm == lb) continue;
            const FrameCorner* c1 = corner_between(la, lm);
            const FrameCorner* c2 = corner_between(lm, lb);
            if (c1 && c2) paths.push_back({c1, c2});
          }
        }
      }
    }
    std::optional<std::vector<HoleRegion>> best;
    double best_area = 0.0;
    for (const auto& path : paths) {
      HoleRegion region;
      region.notch = true;
      region.polygon.push_back(loop_vertex(mesh, ctx.frame, vs[ia]));
      for (const FrameCorner* c : path) {
        PolygonVertex pv;
        pv.point = c->point;
        pv.position = c->position;
        region.polygon.push_back(pv);
      }
      region.polygon.push_back(loop_vertex(mesh, ctx.frame, vs[ib]));
      for (std::size_t i = 0; i + 1 < path.size() + 2; ++i) {
        region.constraints.push_back({region.polygon[i].point, region.polygon[i + 1].point});
      }
      for (auto it = run.rbegin(); it != run.rend(); ++it) region.polygon.push_back(loop_vertex(mesh, ctx.frame, *it));
      std::vector<HoleRegion> pieces = split_at_repeats(region);
      double area = 0.0;
      bool valid = !pieces.empty();
      for (auto p = pieces.begin(); p != pieces.end();) {
        const std::vector<Vec2> pts = points_of(p->polygon);
        const double a = polygon_signed_area(pts);
        if (std::abs(a) <= 1e-18) {
          p = pieces.erase(p);
          continue;
        }
        valid = valid && a > 0.0 && is_simple_polygon(pts);
        area += a;
        ++p;
      }
      if (!valid || pieces.empty()) continue;
      if (!best || area < best_area) {
        best = std::move(pieces);
        best_area = area;
      }
    }
    if (best) {
      for (HoleRegion& r : *best) regions.push_back(std::move(r));
    }
  }
  return regions;
}

/// Neighbor vertices lying on a polygon edge that runs along an intersection
/// line. Inserting them keeps the fill conforming to the neighbor's boundary.
void insert_line_vertices(HoleRegion& region, const LabeledMesh& mesh, const ElementContext& ctx,
                          const std::map<FaceLabel, std::vector<std::uint32_t>>& by_label) {
  constexpr double kOnLine = 1e-7;
  std::vector<std::uint32_t> candidates;
  for (const FrameLine& line : ctx.lines) {
    auto it = by_label.find(line.neighbor);
    if (it == by_label.end()) continue;
    for (std::uint32_t f : it->second) {
      for (std::uint32_t v : mesh.triangles[f]) candidates.push_back(v);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  if (candidates.empty()) return;
  std::vector<std::pair<std::uint32_t, Vec2>> near;
  for (std::uint32_t v : candidates) {
    if (std::abs(ctx.segment->plane.signed_distance(mesh.vertices[v])) > kOnLine) continue;
    near.emplace_back(v, ctx.frame.to_2d(mesh.vertices[v]));
  }
  if (near.empty()) return;

  auto& poly = region.polygon;
  std::vector<PolygonVertex> out;
  std::vector<Vec2> inserted;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const PolygonVertex& a = poly[i];
    const PolygonVertex& b = poly[(i + 1) % poly.size()];
    out.push_back(a);
    const bool along = std::any_of(ctx.lines.begin(), ctx.lines.end(), [&](const FrameLine& l) {
      return std::abs(l.distance(a.point)) <= kOnLine && std::abs(l.distance(b.point)) <= kOnLine;
    });
    if (!along) continue;
    const Vec2 d = b.point - a.point;
    const double len2 = d.squaredNorm();
    if (len2 <= 0.0) continue;
    std::vector<std::pair<double, std::size_t>> hits;
    for (std::size_t k = 0; k < near.size(); ++k) {
      if ((a.mesh_vertex && *a.mesh_vertex == near[k].first) || (b.mesh_vertex && *b.mesh_vertex == near[k].first)) continue;
      const Vec2 r = near[k].second - a.point;
      const double t = r.dot(d) / len2;
      const double off = std::abs(d.x() * r.y() - d.y() * r.x()) / std::sqrt(len2);
      if (off <= kOnLine && t * std::sqrt(len2) > kOnLine && (1.0 - t) * std::sqrt(len2) > kOnLine) hits.emplace_back(t, k);
    }
    std::sort(hits.begin(), hits.end());
    for (const auto& [t, k] : hits) {
      out.push_back(loop_vertex(mesh, ctx.frame, near[k].first));
      inserted.push_back(near[k].second);
    }
  }
  if (inserted.empty()) return;
  poly = std::move(out);
  // Constraints through an inserted vertex are split there.
  std::vector<Segment2> split;
  for (const Segment2& c : region.constraints) {
    const Vec2 d = c.b - c.a;
    const double len = d.norm();
    std::vector<std::pair<double, Vec2>> cuts;
    for (const Vec2& q : inserted) {
      const Vec2 r = q - c.a;
      const double t = len > 0.0 ? r.dot(d) / (len * len) : 0.0;
      if (len > 0.0 && std::abs(d.x() * r.y() - d.y() * r.x()) / len <= kOnLine && t * len > kOnLine &&
          (1.0 - t) * len > kOnLine) {
        cuts.emplace_back(t, q);
      }
    }
    std::sort(cuts.begin(), cuts.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    Vec2 from = c.a;
    for (const auto& cut : cuts) {
      split.push_back({from, cut.second});
      from = cut.second;
    }
    split.push_back({from, c.b});
  }
  region.constraints = std::move(split);
}

ElementWork fill_element(const LabeledMesh& mesh, const std::vector<std::uint32_t>& faces,
                         const std::map<FaceLabel, std::vector<std::uint32_t>>& by_label, const ElementContext& ctx,
                         const ReconstructionOptions& options, const Gate* gate) {
  ElementWork work;
  const FaceLabel label = ctx.segment->label();
  std::vector<BoundaryLoop> loops;
  try {
    loops = extract_boundary_loops(mesh, faces, label, ctx.frame);
  } catch (const Error& e) {
    work.failures.push_back({label, e.kind(), e.what()});
    return work;
  }
  std::vector<HoleRegion> regions;
  for (const BoundaryLoop& loop : loops) {
    if (loop.perimeter) {
      if (gate) {
        for (auto& r : perimeter_notches(mesh, loop, ctx, options.snap_tolerance, *gate)) regions.push_back(std::move(r));
      }
      continue;
    }
    if (gate && !(*gate)(loop.vertices, max_edge(mesh, loop.vertices))) continue;
    HoleRegion region;
    for (std::uint32_t v : loop.vertices) region.polygon.push_back(loop_vertex(mesh, ctx.frame, v));
    for (HoleRegion& r : split_at_repeats(region)) regions.push_back(std::move(r));
  }
  std::vector<std::vector<Vec2>> filled;
  for (HoleRegion& region : regions) {
    try {
      HoleRegion clipped = clip_hole_region(std::move(region), ctx.lines, ctx.corners);
      insert_line_vertices(clipped, mesh, ctx, by_label);
      work.patches.push_back(fill_hole_cdt(clipped, ctx.frame, label, options.cdt));
      filled.push_back(points_of(clipped.polygon));
    } catch (const Error& e) {
      work.failures.push_back({label, e.kind(), e.what()});
    }
  }
  // Islands of old faces left inside a filled region.
  for (const auto& poly : filled) {
    Eigen::AlignedBox2d box;
    for (const Vec2& q : poly) box.extend(q);
    for (std::uint32_t f : faces) {
      const Vec2 c = ctx.frame.to_2d(mesh.centroid(f));
      if (box.contains(c) && point_in_polygon(poly, c)) work.absorbed.push_back(f);
    }
  }
  std::sort(work.absorbed.begin(), work.absorbed.end());
  work.absorbed.erase(std::unique(work.absorbed.begin(), work.absorbed.end()), work.absorbed.end());
  return work;
}

void merge_patches(LabeledMesh& mesh, const std::vector<ElementWork>& works, double weld_tolerance,
                   ReconstructionReport& report) {
  std::vector<std::uint8_t> drop(mesh.face_count(), 0);
  std::size_t dropped = 0;
  for (const ElementWork& work : works) {
    for (std::uint32_t f : work.absorbed) {
      if (!drop[f]) {
        drop[f] = 1;
        ++dropped;
        ++report.removed_faces;
        ++report.removed_structural[mesh.labels[f]];
      }
    }
  }
  const std::size_t old_faces = mesh.face_count();
  VertexWelder welder(&mesh.vertices, weld_tolerance);
  for (const ElementWork& work : works) {
    for (const FillPatch& patch : work.patches) {
      std::vector<std::uint32_t> ids(patch.points.size());
      for (std::size_t i = 0; i < patch.points.size(); ++i) {
        ids[i] = patch.mesh_vertex[i] ? *patch.mesh_vertex[i] : welder.weld(patch.points[i]);
      }
      std::size_t added = 0;
      for (const auto& t : patch.triangles) {
        const Triangle tri{ids[t[0]], ids[t[1]], ids[t[2]]};
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
        mesh.add_face(tri, patch.element, true, mesh.has_uvs() ? std::optional<CornerUvs>(missing_uvs()) : std::nullopt);
        ++added;
      }
      report.filled_faces[patch.element] += added;
      ++report.filled_regions;
    }
    for (const ElementFailure& f : work.failures) {
      const bool seen = std::any_of(report.failures.begin(), report.failures.end(), [&](const ElementFailure& o) {
        return o.element == f.element && o.kind == f.kind && o.message == f.message;
      });
      if (!seen) report.failures.push_back(f);
    }
  }
  if (dropped > 0) {
    std::vector<std::uint32_t> kept;
    kept.reserve(mesh.face_count() - dropped);
    for (std::uint32_t f = 0; f < mesh.face_count(); ++f) {
      if (f >= old_faces || !drop[f]) kept.push_back(f);
    }
    mesh = extract_faces(mesh, kept);
  }
}

}  // namespace

ReconstructionResult reconstruct_scene(const LabeledMesh& mesh, const std::vector<PlaneSegment>& segments,
                                       const RemovalPlan& plan, const ClassMap& class_map,
                                       const ReconstructionOptions& options) {
  ReconstructionResult result;
  ReconstructionReport& report = result.report;
  std::vector<PlaneSegment> sorted = segments;
  std::sort(sorted.begin(), sorted.end(),
            [](const PlaneSegment& a, const PlaneSegment& b) { return a.label() < b.label(); });
  std::vector<ElementFailure> setup_failures;
  const std::vector<ElementContext> contexts = build_contexts(mesh, sorted, options, setup_failures);
  report.failures = setup_failures;

  auto run_pass = [&](LabeledMesh& current, const Gate* gate) {
    const auto by_label = faces_by_label(current);
    std::vector<ElementWork> works(contexts.size());
    parallel_for(contexts.size(), options.jobs, [&](std::size_t i) {
      const ElementContext& ctx = contexts[i];
      if (!ctx.segment) return;
      auto it = by_label.find(ctx.segment->label());
      if (it == by_label.end()) return;
      works[i] = fill_element(current, it->second, by_label, ctx, options, gate);
    });
    merge_patches(current, works, options.weld_tolerance, report);
  };

  LabeledMesh current = mesh;
  for (const RemovalGroup& group : plan.groups) {
    RemovalResult removal = remove_object_faces(current, group.boxes, class_map);
    report.removed_faces += removal.removed_faces.size();
    for (const auto& [label, faces] : removal.removed_structural) report.removed_structural[label] += faces.size();
    current = std::move(removal.mesh);
    const Gate gate = [&](const std::vector<std::uint32_t>& verts, double margin) {
      for (const ObjectBox& box : group.boxes) {
        ObjectBox grown = box;
        grown.min.array() -= margin;
        grown.max.array() += margin;
        for (std::uint32_t v : verts) {
          if (grown.contains(current.vertices[v])) return true;
        }
      }
      return false;
    };
    run_pass(current, &gate);
  }

  // Loose faces not covered by any box.
  std::vector<std::uint32_t> kept;
  for (std::uint32_t f = 0; f < current.face_count(); ++f) {
    const int c = current.labels[f].class_id;
    if (class_map.contains(c) && class_map.is_loose(c)) {
      ++report.removed_faces;
    } else {
      kept.push_back(f);
    }
  }
  if (kept.size() != current.face_count()) current = extract_faces(current, kept);

  if (!plan.groups.empty()) run_pass(current, nullptr);

  // Remaining holes.
  const auto by_label = faces_by_label(current);
  for (const ElementContext& ctx : contexts) {
    if (!ctx.segment) continue;
    auto it = by_label.find(ctx.segment->label());
    if (it == by_label.end()) continue;
    try {
      report.open_holes += extract_hole_boundaries(current, it->second, ctx.segment->label(), ctx.frame).size();
    } catch (const Error&) {
      ++report.open_holes;
    }
  }
  for (const auto& [label, faces] : by_label) {
    if (!class_map.contains(label.class_id) || !class_map.is_structural(label.class_id)) continue;
    const bool planar = std::any_of(sorted.begin(), sorted.end(), [&](const PlaneSegment& s) { return s.label() == label; });
    if (planar) continue;
    Vec3 n = Vec3::Zero();
    for (std::uint32_t f : faces) n += triangle_normal_raw(current.corner(f, 0), current.corner(f, 1), current.corner(f, 2));
    if (n.norm() == 0.0) continue;
    n.normalize();
    ElementFrame frame;
    const Vec3 helper = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    frame.axes.v = (helper - helper.dot(n) * n).normalized();
    frame.axes.u = frame.axes.v.cross(n);
    frame.axes.normal = n;
    try {
      if (!extract_hole_boundaries(current, faces, label, frame).empty()) report.unplaned_with_holes.push_back(label);
    } catch (const Error&) {
      report.unplaned_with_holes.push_back(label);
    }
  }

  result.segments = sorted;
  for (PlaneSegment& s : result.segments) {
    auto it = by_label.find(s.label());
    s.face_ids = it == by_label.end() ? std::vector<std::uint32_t>{} : it->second;
  }
  result.mesh = std::move(current);
  return result;
}

}  // namespace defurnish
