// Acceptance checks; prints one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "defurnish/atlas.hpp"
#include "defurnish/cdt.hpp"
#include "defurnish/config.hpp"
#include "defurnish/evaluation.hpp"
#include "defurnish/inpainting.hpp"
#include "defurnish/mesh_io.hpp"
#include "defurnish/pipeline.hpp"
#include "defurnish/reconstruction.hpp"
#include "defurnish/segmentation.hpp"
#include "defurnish/synth.hpp"
#include "defurnish/uv_mapping.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace defurnish;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

RunOptions quiet(int jobs = 1) {
  RunOptions o;
  o.jobs = jobs;
  o.verbosity = 0;
  return o;
}

std::size_t count_loose(const LabeledMesh& m, const ClassMap& classes) {
  std::size_t n = 0;
  for (const FaceLabel& l : m.labels) n += classes.contains(l.class_id) && classes.is_loose(l.class_id) ? 1 : 0;
  return n;
}

// Image of the in-plane 3D vector t under the face's 3D -> 2D affine map.
Vec2 map_direction(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec2& q0, const Vec2& q1, const Vec2& q2,
                   const Vec3& t) {
  Eigen::Matrix<double, 3, 2> E;
  E.col(0) = p1 - p0;
  E.col(1) = p2 - p0;
  const Eigen::Vector2d ab = E.colPivHouseholderQr().solve(t);
  return ab.x() * (q1 - q0) + ab.y() * (q2 - q0);
}

double angle_to_plus_v(const Vec2& d) { return std::atan2(std::abs(d.x()), d.y()); }

Vec3 in_plane(const Vec3& axis, const Vec3& normal) { return (axis - axis.dot(normal) * normal).normalized(); }

// Signed distance from p to the element plane, positive towards the room interior.
double inward_distance(const TruthElement& e, const Vec3& p) {
  const double s = e.plane.normal.dot(e.inward) >= 0 ? 1.0 : -1.0;
  return s * e.plane.signed_distance(p);
}

// ---------------------------------------------------------------------------

void ac1(Verdict& v) {
  testing::TempDir fx;
  testing::TempDir out;
  const SynthRoom room = generate_room(standard_room_spec(42));
  save_fixture(room, fx.path());
  const PipelineConfig config;
  const auto t0 = std::chrono::steady_clock::now();
  const StageOutcome o = run_pipeline(fx / "furnished.obj", std::nullopt, config, out.path(), quiet(1));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  v.require(o.exit_code == 0, "pipeline exit code");
  const GroundTruth truth = load_truth(fx / "truth.json", config.classes);
  const LabeledMesh result = load_mesh(out / "pack/empty_room.obj", std::nullopt, config.classes);
  const GeometricError g = geometric_error(result, truth);
  const std::size_t loose = count_loose(result, config.classes);
  const std::size_t loops = count_boundary_loops(result);
  const auto open_holes = o.report.at("reconstruction").at("open_holes").get<std::size_t>();
  v.detail << "faces_in=" << room.furnished.face_count() << " elements=" << truth.elements.size()
           << " objects=" << standard_room_spec(42).objects.size() << " seconds=" << seconds << " loose=" << loose
           << " open_holes=" << open_holes << " boundary_loops=" << loops << " new_vertices=" << g.vertices
           << " rmse=" << g.rmse;
  v.require(room.furnished.face_count() >= 40000 && room.furnished.face_count() <= 60000, "fixture size");
  v.require(seconds < 60.0, "runtime");
  v.require(loose == 0, "loose faces");
  v.require(open_holes == 0 && loops == 0, "open holes");
  v.require(g.vertices > 0, "no fill produced");
  v.require(g.rmse <= 1e-6, "rmse");
}

// ---------------------------------------------------------------------------

using oracle::P2;

bool on_segment(P2 p, P2 a, P2 b) {
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const double cr = ((b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)) / len;
  const double t = ((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / (len * len);
  return std::abs(cr) <= 1e-9 && t >= -1e-12 && t <= 1 + 1e-12;
}

void ac2(Verdict& v) {
  Rng rng(2024);
  int polygons = 0;
  int violations = 0;
  int missing = 0;
  int area_fail = 0;
  int flipped = 0;
  double worst_area = 0.0;
  while (polygons < 200) {
    const int n = 3 + static_cast<int>(rng.below(48));
    std::vector<double> angles;
    for (int i = 0; i < n; ++i) angles.push_back(rng.uniform(0, 2 * kPi));
    std::sort(angles.begin(), angles.end());
    std::vector<Vec2> poly;
    for (double a : angles) {
      const double r = rng.uniform(0.3, 2.0);
      poly.push_back(Vec2(r * std::cos(a), r * std::sin(a)));
    }
    if (!is_simple_polygon(poly) || polygon_signed_area(poly) < 1e-3) continue;
    // Min angular gap keeps the star kernel around the origin non-trivial.
    bool ok = true;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const double cr = cross2(Vec2::Zero(), poly[i], poly[(i + 1) % poly.size()]);
      ok = ok && cr > 1e-3;
    }
    if (!ok) continue;
    ++polygons;

    std::vector<Segment2> cons;
    const int chords = static_cast<int>(rng.below(3));
    for (int c = 0; c < chords; ++c) {
      const std::size_t i = rng.below(poly.size());
      const Vec2 mid = 0.5 * (poly[i] + poly[(i + 1) % poly.size()]);
      cons.push_back({Vec2::Zero(), rng.uniform(0.3, 0.9) * mid});
    }
    CdtOptions opt;
    if (rng.below(3) == 0) opt.max_edge_length = 0.4;
    const CdtResult r = triangulate_polygon(poly, cons, opt);

    std::vector<P2> pts;
    for (const Vec2& p : r.points) pts.push_back({p.x(), p.y()});
    std::vector<std::pair<P2, P2>> segments;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& a = poly[i];
      const Vec2& b = poly[(i + 1) % poly.size()];
      segments.push_back({{a.x(), a.y()}, {b.x(), b.y()}});
    }
    for (const Segment2& s : cons) segments.push_back({{s.a.x(), s.a.y()}, {s.b.x(), s.b.y()}});

    std::set<std::pair<int, int>> edges;
    for (const auto& t : r.triangles) {
      for (int k = 0; k < 3; ++k) edges.insert({std::min(t[k], t[(k + 1) % 3]), std::max(t[k], t[(k + 1) % 3])});
    }
    // An edge is constrained when both ends lie on one input segment.
    std::set<std::pair<int, int>> constrained;
    for (const auto& e : edges) {
      for (const auto& [a, b] : segments) {
        if (on_segment(pts[e.first], a, b) && on_segment(pts[e.second], a, b)) {
          constrained.insert(e);
          break;
        }
      }
    }
    violations += oracle::delaunay_violations(pts, r.triangles, constrained);
    for (const auto& [a, b] : segments) missing += oracle::segment_covered(a, b, pts, edges) ? 0 : 1;
    std::vector<P2> ring;
    for (const Vec2& p : poly) ring.push_back({p.x(), p.y()});
    double area = 0.0;
    for (const auto& t : r.triangles) {
      const double ta = oracle::tri_area(pts[t[0]], pts[t[1]], pts[t[2]]);
      flipped += ta <= 0 ? 1 : 0;
      area += ta;
    }
    const double err = std::abs(area - oracle::shoelace(ring));
    worst_area = std::max(worst_area, err);
    area_fail += err <= 1e-9 ? 0 : 1;
  }
  v.detail << "polygons=" << polygons << " circumcircle_violations=" << violations << " missing_constraints=" << missing
           << " non_ccw_triangles=" << flipped << " worst_area_error=" << worst_area;
  v.require(violations == 0, "Delaunay property");
  v.require(missing == 0, "constraint edges");
  v.require(area_fail == 0 && flipped == 0, "area");
}

// ---------------------------------------------------------------------------

struct ClipStats {
  double beyond = 0.0;        // worst fill-vertex distance outside any room plane
  std::size_t on_line = 0;    // fill vertices on the floor/wall line
  double corner_gap = std::numeric_limits<double>::infinity();
  std::size_t open_holes = 0;
};

ClipStats clip_scenario(const RoomSpec& spec, FaceLabel a, FaceLabel b, const std::optional<Vec3>& corner) {
  const testing::Reconstructed r = testing::reconstruct_room(spec);
  const GroundTruth& truth = r.room.truth;
  const TruthElement* ea = truth.find(a);
  const TruthElement* eb = truth.find(b);
  const LabeledMesh& m = r.result.mesh;
  ClipStats s;
  s.open_holes = r.result.report.open_holes + count_boundary_loops(m);
  for (std::size_t f = 0; f < m.face_count(); ++f) {
    if (!m.face_is_new[f]) continue;
    for (int k = 0; k < 3; ++k) {
      const Vec3 p = m.corner(f, k);
      for (const TruthElement& e : truth.elements) s.beyond = std::max(s.beyond, -inward_distance(e, p));
      if (std::abs(ea->plane.signed_distance(p)) <= 1e-9 && std::abs(eb->plane.signed_distance(p)) <= 1e-9) ++s.on_line;
      if (corner) s.corner_gap = std::min(s.corner_gap, (p - *corner).norm());
    }
  }
  return s;
}

void ac3(Verdict& v) {
  // Box against wall x = 0 on the floor.
  RoomSpec wall_spec;
  wall_spec.edge_length = 0.0583;
  wall_spec.objects = {{Vec3(0.0, 1.5, 0.0), Vec3(0.6, 1.0, 1.2), 13}};
  const ClipStats wall = clip_scenario(wall_spec, {2, 0}, {1, 0}, std::nullopt);
  v.detail << "floor_wall: beyond=" << wall.beyond << " on_line=" << wall.on_line << " open=" << wall.open_holes;
  v.require(wall.beyond <= 1e-9 && wall.on_line >= 2 && wall.open_holes == 0, "floor-wall clip");

  // Box in the corner x = 5, y = 0, plus the same room rotated about the vertical axis.
  for (double rotation : {0.0, 27.0}) {
    RoomSpec spec = standard_room_spec(42);
    spec.rotation = rotation;
    spec.objects = {{Vec3(3.9, 0.0, 0.0), Vec3(1.1, 0.8, 0.8), 12}};
    const Eigen::Matrix3d R = Eigen::AngleAxisd(deg_to_rad(rotation), Vec3::UnitZ()).toRotationMatrix();
    const ClipStats c = clip_scenario(spec, {2, 0}, {1, 1}, Vec3(R * Vec3(5.0, 0.0, 0.0)));
    // The exact corner is the three-plane point of the planted planes.
    const SynthRoom room = generate_room(spec);
    const Vec3 three = intersect_three(room.truth.find({2, 0})->plane, room.truth.find({1, 1})->plane,
                                       room.truth.find({1, 2})->plane);
    v.detail << " corner(rot=" << rotation << "): beyond=" << c.beyond << " gap=" << c.corner_gap
             << " three_plane_vs_planted=" << (three - R * Vec3(5, 0, 0)).norm() << " open=" << c.open_holes;
    v.require(c.beyond <= 1e-9 && c.corner_gap <= 1e-9 && c.open_holes == 0, "corner clip");
  }

  // Direct clip against two oblique lines meeting at a planted corner.
  const Vec2 P(1.3, 0.7);
  const Vec2 d1 = Vec2(std::cos(0.4), std::sin(0.4));
  const Vec2 d2 = Vec2(-std::sin(0.4), std::cos(0.4));
  HoleRegion hole;
  for (const Vec2& q : std::vector<Vec2>{P + Vec2(-0.9, -0.8), P + Vec2(0.6, -0.9), P + Vec2(0.7, 0.6), P + Vec2(-0.8, 0.7)}) {
    PolygonVertex pv;
    pv.point = q;
    pv.position = Vec3(q.x(), q.y(), 0);
    hole.polygon.push_back(pv);
  }
  FrameLine l1;
  l1.point = P;
  l1.direction = d1;
  l1.side = 1;
  FrameLine l2;
  l2.point = P;
  l2.direction = d2;
  l2.side = -1;
  FrameCorner corner;
  corner.line_a = 0;
  corner.line_b = 1;
  corner.point = P;
  corner.position = Vec3(P.x(), P.y(), 0);
  const HoleRegion clipped = clip_hole_region(hole, {l1, l2}, {corner});
  double beyond = 0.0;
  double gap = std::numeric_limits<double>::infinity();
  for (const PolygonVertex& pv : clipped.polygon) {
    const Vec2 r = pv.point - P;
    beyond = std::max(beyond, -(d1.x() * r.y() - d1.y() * r.x()));
    beyond = std::max(beyond, (d2.x() * r.y() - d2.y() * r.x()));
    gap = std::min(gap, (pv.point - P).norm());
  }
  v.detail << " oblique: beyond=" << beyond << " gap=" << gap << " constraints=" << clipped.constraints.size();
  v.require(beyond <= 1e-9 && gap <= 1e-9 && clipped.constraints.size() == 2, "oblique clip");
}

// ---------------------------------------------------------------------------

struct PlantedPlane {
  Vec3 normal;
  double offset;
  Vec3 center;
};

void add_triangle(LabeledMesh& m, const Vec3& c, const Vec3& a, const Vec3& b, double size, Rng& rng) {
  const double phi = rng.uniform(0, 2 * kPi);
  const auto base = static_cast<std::uint32_t>(m.vertices.size());
  for (int k = 0; k < 3; ++k) {
    const double t = phi + k * 2 * kPi / 3;
    m.vertices.push_back(c + size * (std::cos(t) * a + std::sin(t) * b));
  }
  m.add_face({base, base + 1, base + 2}, {1, 0}, false);
}

void ac4(Verdict& v) {
  const std::vector<PlantedPlane> planes{{Vec3::UnitZ(), 0.1, Vec3(0.5, 0.5, 0.1)},
                                         {Vec3::UnitX(), 0.9, Vec3(0.9, 0.5, 0.5)},
                                         {Vec3(1, 1, 1).normalized(), 0.0, Vec3::Zero()}};
  int good_runs = 0;
  double worst_angle = 0.0;
  double worst_offset = 0.0;
  for (int run = 0; run < 20; ++run) {
    Rng rng(derive_seed(4, run, 0));
    LabeledMesh m;
    const int per_plane = 300;
    for (std::size_t p = 0; p < planes.size(); ++p) {
      const Vec3 n = planes[p].normal;
      const Vec3 a = n.unitOrthogonal();
      const Vec3 b = n.cross(a);
      const Vec3 origin = p == 2 ? Vec3(0.3, 0.3, -0.6) : planes[p].center;
      for (int i = 0; i < per_plane; ++i) {
        Vec3 c = origin + rng.uniform(-0.4, 0.4) * a + rng.uniform(-0.4, 0.4) * b;
        c -= (n.dot(c) - planes[p].offset) * n;
        add_triangle(m, c, a, b, 0.02, rng);
      }
    }
    const int outliers = static_cast<int>(std::lround(planes.size() * per_plane * 0.3 / 0.7));
    for (int i = 0; i < outliers; ++i) {
      const Vec3 c(rng.uniform(), rng.uniform(), rng.uniform());
      const Vec3 n = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
      const Vec3 a = n.unitOrthogonal();
      add_triangle(m, c, a, n.cross(a), 0.02, rng);
    }
    SegmentationOptions opt;
    opt.ransac.inlier_dist = 0.01;
    const SegmentationResult seg = segment_structural_planes(m, ClassMap::defaults(), opt, 1000 + run);
    bool all = true;
    for (const PlantedPlane& p : planes) {
      double best_angle = 180.0;
      double best_offset = 0.0;
      for (const PlaneSegment& s : seg.segments) {
        const double d = oracle::angle_deg({s.plane.normal.x(), s.plane.normal.y(), s.plane.normal.z()},
                                           {p.normal.x(), p.normal.y(), p.normal.z()});
        const double angle = std::min(d, 180.0 - d);
        const double offset = std::abs(s.plane.normal.dot(p.normal) >= 0 ? s.plane.offset - p.offset
                                                                          : s.plane.offset + p.offset);
        if (angle < best_angle) {
          best_angle = angle;
          best_offset = offset;
        }
      }
      worst_angle = std::max(worst_angle, best_angle);
      worst_offset = std::max(worst_offset, best_offset);
      all = all && best_angle <= 0.5 && best_offset <= 1e-3;
    }
    good_runs += all ? 1 : 0;
  }
  v.detail << "runs_recovering_all=" << good_runs << "/20 worst_normal_deg=" << worst_angle
           << " worst_offset=" << worst_offset;
  v.require(good_runs >= 19, "recovery rate");
}

// ---------------------------------------------------------------------------

void ac5(Verdict& v) {
  const PipelineConfig config;
  std::vector<RoomSpec> rooms{standard_room_spec(42)};
  RoomSpec rotated = standard_room_spec(7);
  rotated.rotation = 33.0;
  rotated.edge_length = 0.1;
  rooms.push_back(rotated);
  RoomSpec other;
  other.extents = Vec3(3.5, 6.0, 2.8);
  other.edge_length = 0.2;
  other.objects = {{Vec3(0.0, 0.0, 0.0), Vec3(0.9, 0.6, 2.0), 13}, {Vec3(1.5, 2.0, 0.0), Vec3(1.2, 1.4, 0.7), 11},
                   {Vec3(1.0, 5.4, 1.0), Vec3(1.0, 0.6, 0.8), 15}};
  rooms.push_back(other);

  double worst_adjacency_gap = 0.0;
  double worst_stretch = 0.0;
  double worst_vertical = 0.0;
  double worst_horizontal = 0.0;
  std::size_t charts = 0;
  for (const RoomSpec& spec : rooms) {
    const testing::Reconstructed r = testing::reconstruct_room(spec);
    const UnwrapResult u = unwrap_scene(r.result.mesh, r.result.segments, config, 1);
    const LabeledMesh& m = r.result.mesh;
    worst_adjacency_gap = std::max(worst_adjacency_gap, std::abs(1.0 - adjacency_preservation(m, u.charts)));
    v.require(u.fallback_elements.empty() && u.unplaned_elements.empty(), "planar charts only");
    for (const UvChart& chart : u.charts) {
      ++charts;
      for (double s : compute_distortion(m, chart).stretch) worst_stretch = std::max(worst_stretch, std::abs(s - 1.0));
      for (std::size_t i = 0; i < chart.face_ids.size(); ++i) {
        const std::uint32_t f = chart.face_ids[i];
        const Vec3 n = m.normal(f);
        const Vec3 axis = chart.orientation == Orientation::Horizontal ? config.forward_axis : config.up_axis;
        const Vec2 d = map_direction(m.corner(f, 0), m.corner(f, 1), m.corner(f, 2), chart.uvs[i][0], chart.uvs[i][1],
                                     chart.uvs[i][2], in_plane(axis, n));
        const double a = angle_to_plus_v(d);
        if (chart.orientation == Orientation::Horizontal) {
          worst_horizontal = std::max(worst_horizontal, a);
        } else {
          worst_vertical = std::max(worst_vertical, a);
        }
      }
    }
  }
  v.detail << "rooms=" << rooms.size() << " charts=" << charts << " adjacency_gap=" << worst_adjacency_gap
           << " worst_stretch_dev=" << worst_stretch << " worst_up_angle=" << worst_vertical
           << " worst_forward_angle=" << worst_horizontal;
  v.require(worst_adjacency_gap == 0.0, "adjacency");
  v.require(worst_stretch <= 1e-6, "stretch");
  v.require(worst_vertical <= 1e-6, "vertical orientation");
  v.require(worst_horizontal <= 1e-6, "horizontal orientation");
}

// ---------------------------------------------------------------------------

std::string hook_command(const std::string& mode) {
  return std::string("'") + DEFURNISH_HOOK_TOOL + "' " + mode + " {texture} {mask} {output}";
}

std::size_t reference_mismatches(const ChartRaster& before, const ChartRaster& after) {
  std::size_t bad = 0;
  for (int y = 0; y < before.height(); ++y) {
    for (int x = 0; x < before.width(); ++x) {
      if (before.at(x, y) != Coverage::Reference) continue;
      const std::uint8_t* a = before.color.texel(x, y);
      const std::uint8_t* b = after.color.texel(x, y);
      for (int c = 0; c < before.color.channels; ++c) bad += a[c] != b[c] ? 1 : 0;
    }
  }
  return bad;
}

std::vector<ChartRaster> mask_safety_rasters() {
  std::vector<ChartRaster> out;
  Rng rng(6);
  const int sizes[][2] = {{64, 48}, {97, 33}, {40, 120}};
  for (int i = 0; i < 3; ++i) {
    const int w = sizes[i][0];
    const int h = sizes[i][1];
    ChartRaster r = make_raster(w, h);
    r.element = {1, i};
    const double cx = w * rng.uniform(0.3, 0.7);
    const double cy = h * rng.uniform(0.3, 0.7);
    const double rad = std::min(w, h) * 0.25;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double d = std::hypot(x - cx, y - cy);
        Coverage c = d < rad ? Coverage::Fill : Coverage::Reference;
        if (x + y < 6) c = Coverage::Outside;
        r.coverage[static_cast<std::size_t>(y) * w + x] = c;
        const std::array<std::uint8_t, 3> rgb{std::uint8_t(rng.below(256)), std::uint8_t(rng.below(256)),
                                              std::uint8_t((x * 8) & 255)};
        r.color.set_rgb(x, y, c == Coverage::Reference ? rgb : std::array<std::uint8_t, 3>{0, 0, 0});
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

void ac6(Verdict& v) {
  const std::vector<ChartRaster> rasters = mask_safety_rasters();
  std::size_t outputs = 0;
  std::size_t mismatches = 0;
  std::size_t hook_failures = 0;
  auto audit = [&](const InpaintOutcome& o) {
    for (std::size_t i = 0; i < rasters.size(); ++i) {
      mismatches += reference_mismatches(rasters[i], o.rasters[i]);
      ++outputs;
    }
    hook_failures += o.failures.size();
  };
  audit(inpaint_all(rasters, InpaintConfig{}, std::nullopt, 42));
  InpaintConfig coarse;
  coarse.patch_size = 3;
  coarse.pyramid_levels = 3;
  InpaintRunOptions wide;
  wide.jobs = 3;
  wide.max_concurrent_hooks = 2;
  audit(inpaint_all(rasters, coarse, std::nullopt, 9, wide));
  for (const char* mode : {"copy", "red", "scramble", "wrong_size", "fail", "no_output", "sleep"}) {
    ExternalHook hook;
    hook.command = hook_command(mode);
    hook.timeout_seconds = std::string(mode) == "sleep" ? 0.5 : 30.0;
    audit(inpaint_all(rasters, InpaintConfig{}, hook, 42, wide));
  }
  // A chart rasterized from a textured room.
  RoomSpec spec;
  spec.edge_length = 0.25;
  spec.floor.kind = TextureKind::Noise;
  spec.objects = {{Vec3(2.0, 1.5, 0.0), Vec3(1.0, 1.0, 0.8), 10}};
  const testing::Reconstructed r = testing::reconstruct_room(spec);
  PipelineConfig config;
  config.texel_density = 48;
  const UnwrapResult u = unwrap_scene(r.result.mesh, r.result.segments, config, 1);
  std::vector<ChartRaster> room_rasters;
  for (const UvChart& c : u.charts) room_rasters.push_back(rasterize_chart(r.result.mesh, c));
  ExternalHook red;
  red.command = hook_command("scramble");
  for (const auto& hook : {std::optional<ExternalHook>{}, std::optional<ExternalHook>{red}}) {
    const InpaintOutcome o = inpaint_all(room_rasters, InpaintConfig{}, hook, 42);
    for (std::size_t i = 0; i < room_rasters.size(); ++i) {
      mismatches += reference_mismatches(room_rasters[i], o.rasters[i]);
      ++outputs;
    }
  }
  v.detail << "outputs_checked=" << outputs << " hook_failures_reported=" << hook_failures
           << " reference_byte_mismatches=" << mismatches;
  v.require(mismatches == 0, "reference texels changed");
  v.require(hook_failures == 4 * rasters.size(), "misbehaving hooks reported");
}

// ---------------------------------------------------------------------------

ChartRaster centered_mask(int side, int hole, const std::function<std::array<std::uint8_t, 3>(int, int)>& color) {
  ChartRaster r = make_raster(side, side);
  const int lo = (side - hole) / 2;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const bool fill = x >= lo && x < lo + hole && y >= lo && y < lo + hole;
      r.coverage[static_cast<std::size_t>(y) * side + x] = fill ? Coverage::Fill : Coverage::Reference;
      r.color.set_rgb(x, y, fill ? std::array<std::uint8_t, 3>{0, 0, 0} : color(x, y));
    }
  }
  r.seed = derive_seed(42, 1, 0);
  return r;
}

double fill_mae(const ChartRaster& in, const ChartRaster& out,
                const std::function<std::array<std::uint8_t, 3>(int, int)>& truth) {
  double err = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      if (in.at(x, y) != Coverage::Fill) continue;
      const auto want = truth(x, y);
      const auto got = out.color.rgb(x, y);
      for (int c = 0; c < 3; ++c) err += std::abs(double(want[c]) - double(got[c]));
      n += 3;
    }
  }
  return err / static_cast<double>(n);
}

void ac7(Verdict& v) {
  auto constant = [](int, int) { return std::array<std::uint8_t, 3>{131, 97, 64}; };
  auto stripes = [](int x, int) {
    return oracle::stripe(x, 8, 1, 0) ? std::array<std::uint8_t, 3>{210, 180, 60} : std::array<std::uint8_t, 3>{40, 70, 150};
  };
  const ChartRaster c = centered_mask(256, 64, constant);
  const double mae_constant = fill_mae(c, inpaint_exemplar(c, InpaintConfig{}), constant);
  const ChartRaster s = centered_mask(256, 64, stripes);
  const double mae_stripes = fill_mae(s, inpaint_exemplar(s, InpaintConfig{}), stripes);
  v.detail << "constant_mae=" << mae_constant << " stripes_mae=" << mae_stripes / 255.0 << " (x255=" << mae_stripes
           << ")";
  v.require(mae_constant == 0.0, "constant");
  v.require(mae_stripes <= 10.0, "stripes");
}

// ---------------------------------------------------------------------------

void ac8(Verdict& v) {
  Rng rng(8);
  int overlapping = 0;
  int resized = 0;
  for (int set = 0; set < 100; ++set) {
    const int n = 1 + static_cast<int>(rng.below(40));
    std::vector<PackItem> items;
    for (int i = 0; i < n; ++i) {
      items.push_back({1 + static_cast<int>(rng.below(300)), 1 + static_cast<int>(rng.below(300)),
                       {static_cast<int>(rng.below(3)), static_cast<int>(rng.below(4))}, i});
    }
    PackParams p;
    p.gutter = 1 + static_cast<int>(rng.below(6));
    p.max_atlas_side = 512 << rng.below(3);
    const AtlasLayout l = pack_rectangles(items, p);
    std::vector<oracle::Rect> rects;
    std::vector<std::pair<int, int>> pages;
    for (const AtlasPage& pg : l.pages) pages.push_back({pg.width, pg.height});
    for (std::size_t i = 0; i < items.size(); ++i) {
      const Placement& pl = l.placements[i];
      resized += (pl.width != items[i].width || pl.height != items[i].height) ? 1 : 0;
      rects.push_back({pl.page, pl.x - p.gutter, pl.y - p.gutter, pl.x + pl.width + p.gutter,
                       pl.y + pl.height + p.gutter});
    }
    overlapping += oracle::rectangles_disjoint(rects, pages) ? 0 : 1;
  }

  double worst_occupancy = 1.0;
  int below_occupancy = 0;
  for (int set = 0; set < 100; ++set) {
    const int n = 10 + static_cast<int>(rng.below(31));
    std::vector<PackItem> items;
    for (int i = 0; i < n; ++i) {
      const int shortest = 32 + static_cast<int>(rng.below(225));
      const int longest = std::min(4 * shortest, shortest + static_cast<int>(rng.below(3 * shortest + 1)));
      const bool wide = rng.below(2) == 0;
      items.push_back({wide ? longest : shortest, wide ? shortest : longest, {1, i}, 0});
    }
    const double occ = occupancy(pack_rectangles(items, PackParams{}));
    worst_occupancy = std::min(worst_occupancy, occ);
    below_occupancy += occ < 0.4 ? 1 : 0;
  }

  // Translation only: atlas texel coordinates are chart texels plus the placement offset,
  // so the world-up image direction is unchanged.
  RoomSpec spec;
  spec.edge_length = 0.2;
  spec.rotation = 21.0;
  spec.objects = {{Vec3(1.0, 1.0, 0.0), Vec3(1.0, 0.7, 0.9), 11}};
  const testing::Reconstructed r = testing::reconstruct_room(spec);
  PipelineConfig config;
  config.texel_density = 40;
  const UnwrapResult u = unwrap_scene(r.result.mesh, r.result.segments, config, 1);
  const AtlasLayout layout = pack_charts(u.charts, config.pack);
  std::vector<std::shared_ptr<const TextureImage>> pages;
  for (const AtlasPage& pg : layout.pages) pages.push_back(std::make_shared<TextureImage>(pg.width, pg.height));
  const LabeledMesh out = reproject(r.result.mesh, u.charts, layout, pages);
  double worst_offset = 0.0;
  double worst_turn = 0.0;
  for (std::size_t c = 0; c < u.charts.size(); ++c) {
    const UvChart& chart = u.charts[c];
    const Placement& pl = layout.placements[c];
    const AtlasPage& pg = layout.pages[pl.page];
    for (std::size_t i = 0; i < chart.face_ids.size(); ++i) {
      const std::uint32_t f = chart.face_ids[i];
      std::array<Vec2, 3> atlas_texels;
      for (int k = 0; k < 3; ++k) {
        const Vec2 uv = out.corner_uvs[f][k];
        atlas_texels[k] = Vec2(uv.x() * pg.width, uv.y() * pg.height);
        worst_offset = std::max(worst_offset, (atlas_texels[k] - chart.uvs[i][k] - Vec2(pl.x, pl.y)).norm());
      }
      const Vec3 n = r.result.mesh.normal(f);
      const Vec3 axis = chart.orientation == Orientation::Horizontal ? config.forward_axis : config.up_axis;
      const Vec3 t = in_plane(axis, n);
      const Vec3 p0 = r.result.mesh.corner(f, 0);
      const Vec3 p1 = r.result.mesh.corner(f, 1);
      const Vec3 p2 = r.result.mesh.corner(f, 2);
      const Vec2 before = map_direction(p0, p1, p2, chart.uvs[i][0], chart.uvs[i][1], chart.uvs[i][2], t);
      const Vec2 after = map_direction(p0, p1, p2, atlas_texels[0], atlas_texels[1], atlas_texels[2], t);
      worst_turn = std::max(worst_turn, std::abs(std::atan2(before.x() * after.y() - before.y() * after.x(),
                                                            before.dot(after))));
    }
  }
  v.detail << "sets=100 overlapping_sets=" << overlapping << " resized=" << resized
           << " worst_occupancy=" << worst_occupancy << " sets_below_0.4=" << below_occupancy << " worst_translation_residual=" << worst_offset
           << " worst_up_turn=" << worst_turn;
  v.require(overlapping == 0, "overlap");
  v.require(resized == 0, "charts must not be rotated or scaled");
  v.require(worst_occupancy >= 0.4, "occupancy");
  v.require(worst_offset <= 1e-6 && worst_turn <= 1e-9, "translation only");
}

// ---------------------------------------------------------------------------

using TriKey = std::array<std::array<double, 3>, 3>;

std::vector<std::pair<TriKey, FaceLabel>> geometry_key(const LabeledMesh& m) {
  std::vector<std::pair<TriKey, FaceLabel>> out;
  for (std::size_t f = 0; f < m.face_count(); ++f) {
    std::array<std::array<double, 3>, 3> c;
    for (int k = 0; k < 3; ++k) {
      const Vec3 p = m.corner(f, k);
      c[k] = {p.x(), p.y(), p.z()};
    }
    // Rotate so the smallest corner comes first; winding is preserved.
    const auto first = std::min_element(c.begin(), c.end()) - c.begin();
    std::rotate(c.begin(), c.begin() + first, c.end());
    out.push_back({c, m.labels[f]});
  }
  std::sort(out.begin(), out.end());
  return out;
}

void ac9(Verdict& v) {
  const ClassMap classes = ClassMap::defaults();
  // Two overlapping boxes spanning a floor region.
  RoomSpec spec;
  spec.edge_length = 0.1;
  spec.objects = {{Vec3(1.5, 1.0, 0.0), Vec3(1.0, 1.0, 0.6), 10}, {Vec3(2.3, 1.6, 0.0), Vec3(1.0, 1.2, 0.5), 11}};
  const SynthRoom room = generate_room(spec);
  const SegmentationResult seg = segment_structural_planes(room.furnished, classes, SegmentationOptions{}, 42);
  const LabeledMesh labeled = apply_segmentation(room.furnished, seg);
  const std::vector<ObjectBox> boxes = object_bounding_boxes(labeled, classes, 0.02);
  const RemovalPlan grouped = plan_removal_order(boxes);
  RemovalPlan singles;
  for (const ObjectBox& b : boxes) singles.groups.push_back({{b}, b.volume()});
  const ReconstructionResult rg = reconstruct_scene(labeled, seg.segments, grouped, classes);
  const ReconstructionResult rs = reconstruct_scene(labeled, seg.segments, singles, classes);
  const GeometricError eg = geometric_error(rg.mesh, room.truth);
  const GeometricError es = geometric_error(rs.mesh, room.truth);
  v.detail << "overlap: groups=" << grouped.groups.size() << " grouped_rmse=" << eg.rmse << " (holes "
           << eg.hole_loops << ") sequential_rmse=" << es.rmse << " (holes " << es.hole_loops << ")";
  v.require(grouped.groups.size() == 1, "overlapping boxes grouped");
  v.require(eg.rmse <= es.rmse, "grouped rmse");
  v.require(eg.hole_loops == 0, "grouped fill closed");

  // Three disjoint boxes, every group order.
  RoomSpec three;
  three.edge_length = 0.1;
  three.objects = {{Vec3(0.5, 0.5, 0.0), Vec3(0.6, 0.6, 0.5), 10},
                   {Vec3(2.2, 2.5, 0.0), Vec3(0.8, 0.5, 0.7), 11},
                   {Vec3(4.2, 0.0, 0.0), Vec3(0.8, 0.9, 1.0), 13}};
  const SynthRoom room3 = generate_room(three);
  const SegmentationResult seg3 = segment_structural_planes(room3.furnished, classes, SegmentationOptions{}, 42);
  const LabeledMesh labeled3 = apply_segmentation(room3.furnished, seg3);
  const RemovalPlan plan3 = plan_removal_order(object_bounding_boxes(labeled3, classes, 0.02));
  std::vector<std::size_t> order(plan3.groups.size());
  std::iota(order.begin(), order.end(), 0);
  std::optional<std::vector<std::pair<TriKey, FaceLabel>>> reference;
  int orders = 0;
  int differing = 0;
  do {
    RemovalPlan permuted;
    for (std::size_t i : order) permuted.groups.push_back(plan3.groups[i]);
    const ReconstructionResult r = reconstruct_scene(labeled3, seg3.segments, permuted, classes);
    const auto key = geometry_key(r.mesh);
    if (!reference) {
      reference = key;
    } else if (key != *reference) {
      ++differing;
    }
    ++orders;
  } while (std::next_permutation(order.begin(), order.end()));
  v.detail << " disjoint: groups=" << plan3.groups.size() << " orders=" << orders << " differing=" << differing;
  v.require(plan3.groups.size() == 3 && orders == 6, "three disjoint groups");
  v.require(differing == 0, "order invariance");
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> dump_files(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).string();
    const std::string name = e.path().filename().string();
    if (name == "report.json" || name == "manifest.json") {
      nlohmann::json j = nlohmann::json::parse(testing::read_bytes(e.path()));
      if (name == "manifest.json") j["report"] = strip_timings(j["report"]);
      files[rel] = (name == "report.json" ? strip_timings(j) : j).dump();
    } else {
      files[rel] = testing::read_bytes(e.path());
    }
  }
  return files;
}

void ac10(Verdict& v) {
  testing::TempDir fx;
  save_fixture(generate_room(standard_room_spec(42)), fx.path());
  std::vector<std::map<std::string, std::string>> runs;
  const std::vector<int> jobs{1, 1, 4};
  testing::TempDir root;
  int failures = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const fs::path out = root / ("run" + std::to_string(i));
    const std::string cmd = std::string("'") + DEFURNISH_CLI + "' run '" + (fx / "furnished.obj").string() +
                            "' --out '" + out.string() + "' --seed 42 --jobs " + std::to_string(jobs[i]) + " -q";
    failures += std::system(cmd.c_str()) == 0 ? 0 : 1;
    runs.push_back(dump_files(out));
  }
  std::size_t differing = 0;
  std::set<std::string> names;
  for (const auto& r : runs) {
    for (const auto& [k, _] : r) names.insert(k);
  }
  std::string example;
  for (const std::string& n : names) {
    for (std::size_t i = 1; i < runs.size(); ++i) {
      const auto a = runs[0].find(n);
      const auto b = runs[i].find(n);
      if (a == runs[0].end() || b == runs[i].end() || a->second != b->second) {
        ++differing;
        if (example.empty()) example = n;
      }
    }
  }
  const bool has_outputs = runs[0].count("pack/empty_room.obj") && runs[0].count("pack/empty_room_page0.png") &&
                           runs[0].count("report.json");
  v.detail << "runs=" << runs.size() << " jobs=1,1,4 files=" << names.size() << " differing=" << differing
           << (example.empty() ? "" : " first=" + example);
  v.require(failures == 0, "cli exit status");
  v.require(has_outputs, "outputs present");
  v.require(differing == 0, "byte-identical outputs");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
      {"AC1 end-to-end synthetic room", ac1},      {"AC2 constrained Delaunay fills", ac2},
      {"AC3 plane-intersection clipping", ac3},    {"AC4 RANSAC robustness", ac4},
      {"AC5 semantic UV invariants", ac5},         {"AC6 mask safety", ac6},
      {"AC7 inpainting quality", ac7},             {"AC8 packing", ac8},
      {"AC9 removal ordering", ac9},               {"AC10 determinism", ac10},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " [exception: " << e.what() << "]";
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s | %s | %.1fs\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.str().c_str(), s);
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
