#include "defurnish/cdt.hpp"

#include "defurnish/error.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>
#include <unordered_set>

namespace defurnish {

namespace {

// All predicates run on coordinates normalised to the unit box.
constexpr double kOnLineEps = 1e-12;   // distance from a line
constexpr double kSamePointEps = 1e-11;
constexpr double kInCircleRel = 1e-12;  // relative to the local spread to the 4th power
constexpr int kSuper = 3;  // internal indices 0..2 are the super triangle

double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  const long double abx = static_cast<long double>(b.x()) - a.x();
  const long double aby = static_cast<long double>(b.y()) - a.y();
  const long double acx = static_cast<long double>(c.x()) - a.x();
  const long double acy = static_cast<long double>(c.y()) - a.y();
  return static_cast<double>(abx * acy - aby * acx);
}

// Distance of c from the line through a, b, signed (positive on the left).
double line_distance(const Vec2& a, const Vec2& b, const Vec2& c) {
  const double len = (b - a).norm();
  return len > 0.0 ? orient(a, b, c) / len : (c - a).norm();
}

// Positive when d lies inside the circumcircle of counter-clockwise (a, b, c).
double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const long double adx = static_cast<long double>(a.x()) - d.x(), ady = static_cast<long double>(a.y()) - d.y();
  const long double bdx = static_cast<long double>(b.x()) - d.x(), bdy = static_cast<long double>(b.y()) - d.y();
  const long double cdx = static_cast<long double>(c.x()) - d.x(), cdy = static_cast<long double>(c.y()) - d.y();
  const long double ad = adx * adx + ady * ady;
  const long double bd = bdx * bdx + bdy * bdy;
  const long double cd = cdx * cdx + cdy * cdy;
  return static_cast<double>(adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx));
}

bool segments_properly_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double d1 = line_distance(a, b, c);
  const double d2 = line_distance(a, b, d);
  const double d3 = line_distance(c, d, a);
  const double d4 = line_distance(c, d, b);
  return ((d1 > kOnLineEps && d2 < -kOnLineEps) || (d1 < -kOnLineEps && d2 > kOnLineEps)) &&
         ((d3 > kOnLineEps && d4 < -kOnLineEps) || (d3 < -kOnLineEps && d4 > kOnLineEps));
}

bool on_segment(const Vec2& a, const Vec2& b, const Vec2& p) {
  if (std::abs(line_distance(a, b, p)) > kOnLineEps) return false;
  const double t = (p - a).dot(b - a);
  return t >= -kOnLineEps && t <= (b - a).squaredNorm() + kOnLineEps;
}

bool segments_touch(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  return segments_properly_cross(a, b, c, d) || on_segment(a, b, c) || on_segment(a, b, d) || on_segment(c, d, a) ||
         on_segment(c, d, b);
}

bool point_in_polygon(std::span<const Vec2> poly, const Vec2& p) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

bool on_polygon_boundary(std::span<const Vec2> poly, const Vec2& p) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    if (on_segment(poly[i], poly[(i + 1) % poly.size()], p)) return true;
  }
  return false;
}

std::uint64_t dkey(int a, int b) { return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b); }
std::uint64_t ukey(int a, int b) { return a < b ? dkey(a, b) : dkey(b, a); }

class Mesher {
 public:
  std::vector<Vec2> pts;
  std::vector<std::array<int, 3>> tris;
  std::vector<char> alive;
  std::unordered_map<std::uint64_t, int> owner;  // directed edge -> triangle
  std::unordered_set<std::uint64_t> constrained;

  Mesher() {
    pts = {Vec2(-100.0, -100.0), Vec2(101.0, -100.0), Vec2(0.5, 101.0)};
    add_tri(0, 1, 2);
  }

  int add_tri(int a, int b, int c) {
    const int t = static_cast<int>(tris.size());
    tris.push_back({a, b, c});
    alive.push_back(1);
    owner[dkey(a, b)] = t;
    owner[dkey(b, c)] = t;
    owner[dkey(c, a)] = t;
    return t;
  }

  void kill(int t) {
    alive[t] = 0;
    const auto& v = tris[t];
    for (int k = 0; k < 3; ++k) {
      auto it = owner.find(dkey(v[k], v[(k + 1) % 3]));
      if (it != owner.end() && it->second == t) owner.erase(it);
    }
  }

  int owner_of(int a, int b) const {
    auto it = owner.find(dkey(a, b));
    return it == owner.end() ? -1 : it->second;
  }

  int third(int t, int a, int b) const {
    for (int v : tris[t]) {
      if (v != a && v != b) return v;
    }
    return -1;
  }

  bool has_edge(int a, int b) const { return owner_of(a, b) >= 0 || owner_of(b, a) >= 0; }

  int find_point(const Vec2& p) const {
    for (std::size_t i = kSuper; i < pts.size(); ++i) {
      if ((pts[i] - p).norm() <= kSamePointEps) return static_cast<int>(i);
    }
    return -1;
  }

  int insert_point(const Vec2& p) {
    if (int existing = find_point(p); existing >= 0) return existing;
    int best = -1;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < tris.size(); ++t) {
      if (!alive[t]) continue;
      const auto& v = tris[t];
      double worst = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 3; ++k) worst = std::min(worst, line_distance(pts[v[k]], pts[v[(k + 1) % 3]], p));
      if (worst > best_score) {
        best_score = worst;
        best = static_cast<int>(t);
      }
    }
    if (best < 0 || best_score < -kOnLineEps) {
      throw Error(ErrorKind::InvalidArgument, "triangulation point outside the working domain");
    }
    const int ip = static_cast<int>(pts.size());
    pts.push_back(p);
    const auto v = tris[best];
    int edge = -1;
    for (int k = 0; k < 3; ++k) {
      if (std::abs(line_distance(pts[v[k]], pts[v[(k + 1) % 3]], p)) <= kOnLineEps) edge = k;
    }
    std::vector<std::pair<int, int>> stack;
    if (edge < 0) {
      kill(best);
      add_tri(v[0], v[1], ip);
      add_tri(v[1], v[2], ip);
      add_tri(v[2], v[0], ip);
      stack = {{v[0], v[1]}, {v[1], v[2]}, {v[2], v[0]}};
    } else {
      const int a = v[edge];
      const int b = v[(edge + 1) % 3];
      const int c = v[(edge + 2) % 3];
      const int u = owner_of(b, a);
      kill(best);
      add_tri(a, ip, c);
      add_tri(ip, b, c);
      stack = {{c, a}, {b, c}};
      if (u >= 0) {
        const int d = third(u, b, a);
        kill(u);
        add_tri(b, ip, d);
        add_tri(ip, a, d);
        stack.emplace_back(d, b);
        stack.emplace_back(a, d);
      }
      if (constrained.erase(ukey(a, b))) {
        constrained.insert(ukey(a, ip));
        constrained.insert(ukey(ip, b));
      }
    }
    legalize(stack, false);
    return ip;
  }

  // Lawson flips; with `domain_only`, super-triangle vertices are never touched.
  void legalize(std::vector<std::pair<int, int>> stack, bool domain_only) {
    std::size_t budget = 200000 + 50 * pts.size() * pts.size();
    while (!stack.empty() && budget-- > 0) {
      const auto [a, b] = stack.back();
      stack.pop_back();
      const int t = owner_of(a, b);
      const int u = owner_of(b, a);
      if (t < 0 || u < 0 || constrained.count(ukey(a, b))) continue;
      const int x = third(t, a, b);
      const int d = third(u, b, a);
      if (domain_only && (a < kSuper || b < kSuper || x < kSuper || d < kSuper)) continue;
      double spread = 0.0;
      for (int v : {a, b, x}) spread = std::max({spread, std::abs(pts[v].x() - pts[d].x()), std::abs(pts[v].y() - pts[d].y())});
      const double s2 = spread * spread;
      if (!(incircle(pts[a], pts[b], pts[x], pts[d]) > kInCircleRel * s2 * s2)) continue;
      if (!(orient(pts[a], pts[d], pts[x]) > 0.0 && orient(pts[d], pts[b], pts[x]) > 0.0)) continue;
      kill(t);
      kill(u);
      add_tri(a, d, x);
      add_tri(d, b, x);
      stack.emplace_back(a, d);
      stack.emplace_back(d, b);
      stack.emplace_back(b, x);
      stack.emplace_back(x, a);
    }
  }

  void insert_constraint(int a, int b) {
    if (a == b) return;
    // Split at vertices lying on the segment, nearest to a first.
    int split = -1;
    double split_t = std::numeric_limits<double>::infinity();
    const Vec2 ab = pts[b] - pts[a];
    const double len2 = ab.squaredNorm();
    for (std::size_t i = kSuper; i < pts.size(); ++i) {
      const int v = static_cast<int>(i);
      if (v == a || v == b) continue;
      if (std::abs(line_distance(pts[a], pts[b], pts[v])) > kOnLineEps) continue;
      const double t = (pts[v] - pts[a]).dot(ab);
      if (t > kOnLineEps && t < len2 - kOnLineEps && t < split_t) {
        split_t = t;
        split = v;
      }
    }
    if (split >= 0) {
      insert_constraint(a, split);
      insert_constraint(split, b);
      return;
    }
    for (int round = 0; round < 10000 && !has_edge(a, b); ++round) {
      std::vector<std::pair<int, int>> crossing;
      for (std::size_t t = 0; t < tris.size(); ++t) {
        if (!alive[t]) continue;
        const auto& v = tris[t];
        for (int k = 0; k < 3; ++k) {
          const int p = v[k];
          const int q = v[(k + 1) % 3];
          if (p > q && owner_of(q, p) >= 0) continue;
          if (segments_properly_cross(pts[a], pts[b], pts[p], pts[q])) crossing.emplace_back(p, q);
        }
      }
      if (crossing.empty()) break;
      for (const auto& [p, q] : crossing) {
        const int t = owner_of(p, q);
        const int w = owner_of(q, p);
        if (t < 0 || w < 0) continue;
        if (constrained.count(ukey(p, q))) throw Error(ErrorKind::InvalidArgument, "constraint segments intersect");
        const int x = third(t, p, q);
        const int y = third(w, q, p);
        if (orient(pts[p], pts[y], pts[x]) > 0.0 && orient(pts[y], pts[q], pts[x]) > 0.0) {
          kill(t);
          kill(w);
          add_tri(p, y, x);
          add_tri(y, q, x);
        }
      }
    }
    if (!has_edge(a, b)) throw Error(ErrorKind::InvalidArgument, "could not recover a constraint edge");
    constrained.insert(ukey(a, b));
  }
};

}  // namespace

bool is_simple_polygon(std::span<const Vec2> polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  Eigen::AlignedBox2d box;
  for (const Vec2& p : polygon) box.extend(p);
  const double scale = std::max(box.sizes().maxCoeff(), std::numeric_limits<double>::min());
  std::vector<Vec2> q;
  q.reserve(n);
  for (const Vec2& p : polygon) q.push_back((p - box.min()) / scale);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = q[i];
    const Vec2& b = q[(i + 1) % n];
    if ((b - a).norm() <= kSamePointEps) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec2& c = q[j];
      const Vec2& d = q[(j + 1) % n];
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) {
        // Adjacent edges may only share their common vertex.
        const Vec2& shared = (j == i + 1) ? b : a;
        const Vec2& far_other = (j == i + 1) ? d : c;
        const Vec2& far_self = (j == i + 1) ? a : b;
        if (on_segment(far_self, shared, far_other) || on_segment(shared, far_other, far_self)) return false;
        continue;
      }
      if (segments_touch(a, b, c, d)) return false;
    }
  }
  return true;
}

CdtResult triangulate_polygon(std::span<const Vec2> polygon, std::span<const Segment2> constraints,
                              const CdtOptions& options) {
  if (!is_simple_polygon(polygon)) throw Error(ErrorKind::SelfIntersecting, "polygon is not simple");
  const std::size_t n = polygon.size();
  Eigen::AlignedBox2d box;
  for (const Vec2& p : polygon) box.extend(p);
  const Vec2 origin = box.min();
  const double scale = box.sizes().maxCoeff();
  auto to_unit = [&](const Vec2& p) -> Vec2 { return (p - origin) / scale; };

  std::vector<Vec2> poly;
  poly.reserve(n);
  for (const Vec2& p : polygon) poly.push_back(to_unit(p));

  std::vector<Segment2> cons;
  for (const Segment2& s : constraints) {
    Segment2 u{to_unit(s.a), to_unit(s.b)};
    for (const Vec2* p : {&u.a, &u.b}) {
      if (!point_in_polygon(poly, *p) && !on_polygon_boundary(poly, *p)) {
        throw Error(ErrorKind::ConstraintOutside, "constraint endpoint outside polygon");
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (segments_properly_cross(u.a, u.b, poly[i], poly[(i + 1) % n])) {
        throw Error(ErrorKind::ConstraintOutside, "constraint crosses the polygon boundary");
      }
    }
    if ((u.b - u.a).norm() > kSamePointEps && !point_in_polygon(poly, 0.5 * (u.a + u.b)) &&
        !on_polygon_boundary(poly, 0.5 * (u.a + u.b))) {
      throw Error(ErrorKind::ConstraintOutside, "constraint leaves the polygon");
    }
    cons.push_back(u);
  }

  Mesher m;
  for (const Vec2& p : poly) m.insert_point(p);
  std::vector<std::pair<int, int>> con_idx;
  for (const Segment2& s : cons) con_idx.emplace_back(m.insert_point(s.a), m.insert_point(s.b));
  for (std::size_t i = 0; i < cons.size(); ++i) {
    for (std::size_t j = i + 1; j < cons.size(); ++j) {
      const Segment2& s = cons[i];
      const Segment2& t = cons[j];
      if (!segments_properly_cross(s.a, s.b, t.a, t.b)) continue;
      const Vec2 r = s.b - s.a;
      const Vec2 q = t.b - t.a;
      const double denom = r.x() * q.y() - r.y() * q.x();
      const double k = ((t.a - s.a).x() * q.y() - (t.a - s.a).y() * q.x()) / denom;
      m.insert_point(s.a + k * r);
    }
  }
  for (std::size_t i = 0; i < n; ++i) m.insert_constraint(kSuper + static_cast<int>(i), kSuper + static_cast<int>((i + 1) % n));
  for (const auto& [a, b] : con_idx) m.insert_constraint(a, b);

  for (std::size_t t = 0; t < m.tris.size(); ++t) {
    if (!m.alive[t]) continue;
    const auto& v = m.tris[t];
    if (v[0] < kSuper || v[1] < kSuper || v[2] < kSuper) {
      m.kill(static_cast<int>(t));
      continue;
    }
    const Vec2 c = (m.pts[v[0]] + m.pts[v[1]] + m.pts[v[2]]) / 3.0;
    if (!point_in_polygon(poly, c)) m.kill(static_cast<int>(t));
  }

  auto all_edges = [&]() {
    std::vector<std::pair<int, int>> edges;
    for (std::size_t t = 0; t < m.tris.size(); ++t) {
      if (!m.alive[t]) continue;
      const auto& v = m.tris[t];
      for (int k = 0; k < 3; ++k) edges.emplace_back(v[k], v[(k + 1) % 3]);
    }
    return edges;
  };
  m.legalize(all_edges(), true);

  if (options.max_edge_length > 0.0) {
    const double limit = options.max_edge_length / scale;
    for (int added = 0; added < options.max_refinement_points; ++added) {
      int target = -1;
      for (std::size_t t = 0; t < m.tris.size() && target < 0; ++t) {
        if (!m.alive[t]) continue;
        const auto& v = m.tris[t];
        for (int k = 0; k < 3; ++k) {
          const int a = v[k];
          const int b = v[(k + 1) % 3];
          if (!m.constrained.count(ukey(a, b)) && (m.pts[a] - m.pts[b]).norm() > limit) target = static_cast<int>(t);
        }
      }
      if (target < 0) break;
      const auto& v = m.tris[target];
      m.insert_point((m.pts[v[0]] + m.pts[v[1]] + m.pts[v[2]]) / 3.0);
    }
  }

  CdtResult out;
  out.polygon_size = n;
  out.points.reserve(m.pts.size() - kSuper);
  for (std::size_t i = kSuper; i < m.pts.size(); ++i) {
    out.points.push_back(i < kSuper + n ? polygon[i - kSuper] : Vec2(origin + m.pts[i] * scale));
  }
  for (std::size_t t = 0; t < m.tris.size(); ++t) {
    if (!m.alive[t]) continue;
    const auto& v = m.tris[t];
    out.triangles.push_back({v[0] - kSuper, v[1] - kSuper, v[2] - kSuper});
  }
  std::sort(out.triangles.begin(), out.triangles.end());
  for (std::uint64_t key : m.constrained) {
    const int a = static_cast<int>(key >> 32) - kSuper;
    const int b = static_cast<int>(key & 0xffffffffu) - kSuper;
    out.constrained_edges.emplace_back(a, b);
  }
  std::sort(out.constrained_edges.begin(), out.constrained_edges.end());
  return out;
}

}  // namespace defurnish
