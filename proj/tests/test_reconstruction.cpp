#include <algorithm>
#include <cmath>
#include <set>

#include "defurnish/cdt.hpp"
#include "defurnish/error.hpp"
#include "defurnish/evaluation.hpp"
#include "defurnish/reconstruction.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace defurnish;

namespace {

std::vector<oracle::P2> to_oracle(const std::vector<Vec2>& pts) {
  std::vector<oracle::P2> out;
  for (const Vec2& p : pts) out.push_back({p.x(), p.y()});
  return out;
}

std::set<std::pair<int, int>> all_edges(const CdtResult& r) {
  std::set<std::pair<int, int>> edges;
  for (const auto& t : r.triangles) {
    for (int k = 0; k < 3; ++k) edges.insert({std::min(t[k], t[(k + 1) % 3]), std::max(t[k], t[(k + 1) % 3])});
  }
  return edges;
}

double triangulated_area(const CdtResult& r) {
  const auto pts = to_oracle(r.points);
  double a = 0.0;
  for (const auto& t : r.triangles) a += oracle::tri_area(pts[t[0]], pts[t[1]], pts[t[2]]);
  return a;
}

PlaneSegment floor_segment() {
  PlaneSegment s;
  s.plane = Plane{Vec3::UnitZ(), 0.0};
  s.class_id = 2;
  s.orientation = Orientation::Horizontal;
  s.facing = 1;
  return s;
}

HoleRegion square_region(double x0, double y0, double x1, double y1) {
  HoleRegion r;
  for (const Vec2& p : {Vec2(x0, y0), Vec2(x1, y0), Vec2(x1, y1), Vec2(x0, y1)}) {
    PolygonVertex v;
    v.point = p;
    v.position = Vec3(p.x(), p.y(), 0.0);
    r.polygon.push_back(v);
  }
  return r;
}

FrameLine frame_line(Vec2 point, Vec2 direction, int side) {
  FrameLine l;
  l.point = point;
  l.direction = direction;
  l.side = side;
  return l;
}

ObjectBox box(FaceLabel label, Vec3 lo, Vec3 hi) {
  ObjectBox b;
  b.label = label;
  b.min = lo;
  b.max = hi;
  return b;
}

}  // namespace

TEST_SUITE("cdt") {
  TEST_CASE("unit square") {
    const std::vector<Vec2> sq{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
    const CdtResult r = triangulate_polygon(sq, {});
    CHECK(r.triangles.size() == 2);
    CHECK(std::abs(triangulated_area(r) - 1.0) <= 1e-12);
  }

  TEST_CASE("random convex polygons match the shoelace area") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 3 + static_cast<int>(rng.below(30));
      std::vector<double> angles;
      for (int i = 0; i < n; ++i) angles.push_back(rng.uniform(0, 2 * kPi));
      std::sort(angles.begin(), angles.end());
      angles.erase(std::unique(angles.begin(), angles.end()), angles.end());
      std::vector<Vec2> poly;
      for (double a : angles) poly.push_back(Vec2(std::cos(a), std::sin(a)) * 3.0);
      if (poly.size() < 3 || polygon_signed_area(poly) < 1e-3) continue;
      const CdtResult r = triangulate_polygon(poly, {});
      CHECK(r.triangles.size() == poly.size() - 2);
      CHECK(std::abs(triangulated_area(r) - oracle::shoelace(to_oracle(poly))) <= 1e-9);
    }
  }

  TEST_CASE("diagonal constraint appears as edges") {
    const std::vector<Vec2> sq{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
    for (const Segment2 diag : {Segment2{Vec2(0, 0), Vec2(1, 1)}, Segment2{Vec2(1, 0), Vec2(0, 1)}}) {
      const CdtResult r = triangulate_polygon(sq, std::vector<Segment2>{diag});
      const auto pts = to_oracle(r.points);
      CHECK(oracle::segment_covered({diag.a.x(), diag.a.y()}, {diag.b.x(), diag.b.y()}, pts, all_edges(r)));
    }
  }

  TEST_CASE("interior constraint and refinement keep the Delaunay property") {
    const std::vector<Vec2> poly{Vec2(0, 0), Vec2(4, 0), Vec2(4, 3), Vec2(2, 4), Vec2(0, 3)};
    const std::vector<Segment2> cons{{Vec2(1, 1), Vec2(3, 2.5)}};
    CdtOptions opt;
    opt.max_edge_length = 0.5;
    const CdtResult r = triangulate_polygon(poly, cons, opt);
    const auto pts = to_oracle(r.points);
    std::set<std::pair<int, int>> constrained(r.constrained_edges.begin(), r.constrained_edges.end());
    CHECK(oracle::delaunay_violations(pts, r.triangles, constrained) == 0);
    CHECK(oracle::segment_covered({1, 1}, {3, 2.5}, pts, all_edges(r)));
    CHECK(std::abs(triangulated_area(r) - oracle::shoelace(to_oracle(poly))) <= 1e-9);
    for (const auto& t : r.triangles) CHECK(oracle::tri_area(pts[t[0]], pts[t[1]], pts[t[2]]) > 0);
  }

  TEST_CASE("star polygon with two chords stays Delaunay after constraint recovery") {
    const std::vector<Vec2> poly{
        Vec2(1.1404746401424997, 0.031781587393486334),  Vec2(1.5374650487450423, 0.52765064349442004),
        Vec2(1.011161648389252, 1.2123861922642096),     Vec2(0.66437251010344411, 0.94772399390887863),
        Vec2(0.20817623346659977, 0.32585043423321131),  Vec2(0.44077344279794406, 1.3396886532542571),
        Vec2(0.56784061575945133, 1.8154360022174432),   Vec2(-0.54213097323332005, 0.85963093756780373),
        Vec2(-0.22353672521335208, 0.26588061502261301), Vec2(-0.9741986450402601, -0.20072863105197933),
        Vec2(-0.92641322770258971, -0.22533442162912359), Vec2(-1.3311837131583739, -0.46604486525834954),
        Vec2(-1.2945501958647527, -1.1833959778311409),  Vec2(-0.98473541793622188, -1.4133952988945202),
        Vec2(-0.210375781648965, -0.37383924193833529),  Vec2(-0.67158973497387675, -1.3291433190241853),
        Vec2(-0.26877174041852681, -0.89465312739329872), Vec2(-0.29764551958138502, -1.6637925786944312),
        Vec2(0.12214920447760562, -1.2735043680289047),  Vec2(0.6794861922638773, -0.96139828133973226),
        Vec2(1.0551101252010173, -1.4116542718058422),   Vec2(1.3956230253311288, -1.0969010913781738),
        Vec2(0.78167265811664133, -0.48170901635305446), Vec2(0.66336080042728063, -0.30907187988994289),
        Vec2(0.30902707158462439, -0.1251974617668726),  Vec2(0.41749910505659427, -0.13538645323485698),
        Vec2(1.3261472141579449, -0.3009498019293505),   Vec2(0.93150934660700579, -0.11574876038716653)};
    const std::vector<Segment2> chords{{Vec2(0, 0), Vec2(-0.38432283384167382, -0.74208693137823789)},
                                       {Vec2(0, 0), Vec2(0.45017653704193089, -0.11265377741522281)}};
    for (double refine : {0.0, 0.2}) {
      CdtOptions opt;
      opt.max_edge_length = refine;
      const CdtResult r = triangulate_polygon(poly, chords, opt);
      const auto pts = to_oracle(r.points);
      std::set<std::pair<int, int>> constrained(r.constrained_edges.begin(), r.constrained_edges.end());
      CHECK(oracle::delaunay_violations(pts, r.triangles, constrained) == 0);
      for (const Segment2& c : chords) {
        CHECK(oracle::segment_covered({c.a.x(), c.a.y()}, {c.b.x(), c.b.y()}, pts, all_edges(r)));
      }
      CHECK(std::abs(triangulated_area(r) - oracle::shoelace(to_oracle(poly))) <= 1e-9);
    }
  }

  TEST_CASE("errors") {
    const std::vector<Vec2> bowtie{Vec2(0, 0), Vec2(1, 1), Vec2(1, 0), Vec2(0, 1)};
    CHECK_FALSE(is_simple_polygon(bowtie));
    try {
      triangulate_polygon(bowtie, {});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::SelfIntersecting);
    }
    const std::vector<Vec2> sq{Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)};
    try {
      triangulate_polygon(sq, std::vector<Segment2>{{Vec2(0.5, 0.5), Vec2(2, 0.5)}});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ConstraintOutside);
    }
  }
}

TEST_SUITE("reconstruction") {
  TEST_CASE("two-plane intersections") {
    const Line3 l = intersect_planes(Plane{Vec3::UnitZ(), 0}, Plane{Vec3::UnitX(), 0});
    CHECK(l.point.norm() < 1e-12);
    CHECK(std::abs(std::abs(l.direction.dot(Vec3::UnitY())) - 1.0) < 1e-12);

    try {
      intersect_planes(Plane{Vec3::UnitZ(), 0}, Plane{Vec3::UnitZ(), 1});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NoIntersection);
    }

    const Plane a{Vec3::UnitZ(), 0};
    const Plane b{Vec3(1, 0, 1).normalized(), 1.0 / std::sqrt(2.0)};
    const Line3 m = intersect_planes(a, b);
    CHECK(std::abs(a.signed_distance(m.point)) < 1e-9);
    CHECK(std::abs(b.signed_distance(m.point)) < 1e-9);
    CHECK(std::abs(std::abs(m.direction.normalized().dot(Vec3::UnitY())) - 1.0) < 1e-12);
  }

  TEST_CASE("three-plane corners") {
    CHECK(intersect_three({Vec3::UnitX(), 0}, {Vec3::UnitY(), 0}, {Vec3::UnitZ(), 0}).norm() < 1e-12);
    CHECK((intersect_three({Vec3::UnitX(), 1}, {Vec3::UnitY(), 2}, {Vec3::UnitZ(), 3}) - Vec3(1, 2, 3)).norm() < 1e-12);
    try {
      intersect_three({Vec3::UnitX(), 0}, {Vec3::UnitY(), 0}, {Vec3(1, 1, 0).normalized(), 0});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateCorner);
    }
  }

  TEST_CASE("hole boundaries") {
    const FaceLabel floor{2, 0};
    LabeledMesh m = testing::grid_mesh(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), 10, 10, floor);
    const ElementFrame frame = element_frame(floor_segment(), Vec3::Zero(), Vec3::UnitZ(), Vec3::UnitY());
    auto faces_except = [&](const std::set<int>& cells) {
      std::vector<std::uint32_t> faces;
      for (std::uint32_t f = 0; f < m.face_count(); ++f) {
        if (!cells.count(static_cast<int>(f / 2))) faces.push_back(f);
      }
      return faces;
    };
    CHECK(extract_hole_boundaries(m, faces_except({}), floor, frame).empty());

    const auto one = extract_hole_boundaries(m, faces_except({33, 34, 43, 44}), floor, frame);
    REQUIRE(one.size() == 1);
    CHECK(one[0].vertices.size() >= 4);
    CHECK_FALSE(one[0].perimeter);

    const auto two = extract_hole_boundaries(m, faces_except({11, 77}), floor, frame);
    CHECK(two.size() == 2);
  }

  TEST_CASE("clip at a wall line") {
    const HoleRegion clipped =
        clip_hole_region(square_region(4, 1, 6, 3), {frame_line(Vec2(5, 0), Vec2(0, 1), 1)}, {});
    std::vector<Vec2> pts;
    for (const auto& v : clipped.polygon) pts.push_back(v.point);
    CHECK(std::abs(polygon_signed_area(pts) - 2.0) < 1e-12);
    for (const Vec2& p : pts) CHECK(p.x() <= 5.0 + 1e-12);
    REQUIRE(clipped.constraints.size() == 1);
    CHECK(std::abs(clipped.constraints[0].a.x() - 5.0) < 1e-12);
    CHECK(std::abs(clipped.constraints[0].b.x() - 5.0) < 1e-12);
    CHECK(std::abs(std::abs(clipped.constraints[0].a.y() - clipped.constraints[0].b.y()) - 2.0) < 1e-12);
  }

  TEST_CASE("interior hole is not clipped") {
    const HoleRegion in = square_region(1, 1, 2, 2);
    const HoleRegion out = clip_hole_region(in, {frame_line(Vec2(5, 0), Vec2(0, 1), 1)}, {});
    REQUIRE(out.polygon.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.polygon[i].point == in.polygon[i].point);
    CHECK(out.constraints.empty());
  }

  TEST_CASE("clip at a floor corner") {
    FrameCorner corner;
    corner.line_a = 0;
    corner.line_b = 1;
    corner.point = Vec2(5, 4);
    corner.position = Vec3(5, 4, 0);
    const HoleRegion clipped = clip_hole_region(
        square_region(4, 3, 6, 5), {frame_line(Vec2(5, 0), Vec2(0, 1), 1), frame_line(Vec2(0, 4), Vec2(1, 0), -1)},
        {corner});
    REQUIRE(clipped.constraints.size() == 2);
    int at_corner = 0;
    for (const auto& v : clipped.polygon) {
      if ((v.point - corner.point).norm() < 1e-12) {
        ++at_corner;
        REQUIRE(v.position.has_value());
        CHECK((*v.position - corner.position).norm() <= 1e-9);
      }
    }
    CHECK(at_corner == 1);
    int touching = 0;
    for (const auto& c : clipped.constraints) {
      touching += ((c.a - corner.point).norm() < 1e-12 || (c.b - corner.point).norm() < 1e-12) ? 1 : 0;
    }
    CHECK(touching == 2);
  }

  TEST_CASE("hole beyond the element") {
    try {
      clip_hole_region(square_region(6, 1, 7, 2), {frame_line(Vec2(5, 0), Vec2(0, 1), 1)}, {});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyRegion);
    }
  }

  TEST_CASE("fill patch lies on the plane with the surface winding") {
    PlaneSegment seg = floor_segment();
    const ElementFrame frame = element_frame(seg, Vec3::Zero(), Vec3::UnitZ(), Vec3::UnitY());
    const FillPatch patch = fill_hole_cdt(square_region(1, 1, 3, 2), frame, {2, 0});
    CHECK(patch.triangles.size() >= 2);
    double area = 0.0;
    for (const auto& t : patch.triangles) {
      const Vec3 n = triangle_normal_raw(patch.points[t[0]], patch.points[t[1]], patch.points[t[2]]);
      CHECK(n.dot(Vec3::UnitZ()) > 0);
      area += 0.5 * n.norm();
    }
    CHECK(std::abs(area - 2.0) < 1e-12);
    for (const Vec3& p : patch.points) CHECK(std::abs(p.z()) < 1e-12);
  }

  TEST_CASE("removal plan groups") {
    const ObjectBox a = box({10, 0}, Vec3(0, 0, 0), Vec3(1, 1, 1));
    const ObjectBox b = box({10, 1}, Vec3(0.5, 0.5, 0), Vec3(2, 2, 1));
    const ObjectBox c = box({10, 2}, Vec3(5, 5, 0), Vec3(5.5, 5.5, 0.5));
    const ObjectBox d = box({10, 3}, Vec3(1.5, 1.5, 0), Vec3(3, 3, 1));

    CHECK(plan_removal_order({a, c, box({10, 4}, Vec3(8, 8, 0), Vec3(9, 9, 1))}).groups.size() == 3);

    const RemovalPlan two = plan_removal_order({a, b, c});
    REQUIRE(two.groups.size() == 2);
    CHECK(two.groups[0].boxes.size() == 1);
    CHECK(two.groups[0].boxes[0].label == c.label);
    CHECK(two.groups[1].boxes.size() == 2);
    CHECK(two.groups[0].volume <= two.groups[1].volume);

    const RemovalPlan chain = plan_removal_order({a, b, d});
    REQUIRE(chain.groups.size() == 1);
    CHECK(chain.groups[0].boxes.size() == 3);
  }

  TEST_CASE("face removal rules") {
    const ClassMap classes = ClassMap::defaults();
    LabeledMesh m = testing::grid_mesh(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), 4, 4, {2, 0});
    testing::append_mesh(m, testing::grid_mesh(Vec3(1, 1, 0.5), Vec3(1, 0, 0), Vec3(0, 1, 0), 1, 1, {10, 0}));
    testing::append_mesh(m, testing::grid_mesh(Vec3(3.2, 0.2, 2), Vec3(0.5, 0, 0), Vec3(0, 0.5, 0), 1, 1, {11, 0}));

    const ObjectBox chair = box({10, 0}, Vec3(0.9, 0.9, -0.1), Vec3(2.1, 2.1, 1));
    const RemovalResult r = remove_object_faces(m, {chair}, classes);
    CHECK(r.removed_faces.size() == 4);
    REQUIRE(r.removed_structural.count({2, 0}) == 1);
    CHECK(r.removed_structural.at({2, 0}).size() == 2);

    const ObjectBox lamp = box({11, 0}, Vec3(3.1, 0.1, 1.9), Vec3(3.8, 0.8, 2.1));
    const RemovalResult only = remove_object_faces(m, {lamp}, classes);
    CHECK(only.removed_faces.size() == 2);
    CHECK(only.removed_structural.empty());

    const ObjectBox twin = box({10, 0}, Vec3(0.8, 0.8, -0.2), Vec3(2.2, 2.2, 1));
    const RemovalResult both = remove_object_faces(m, {chair, twin}, classes);
    CHECK(both.removed_faces.size() == 4);
    CHECK(both.removed_structural.at({2, 0}).size() == 2);
    CHECK(std::is_sorted(both.removed_faces.begin(), both.removed_faces.end()));
  }

  TEST_CASE("room with one box on the floor") {
    RoomSpec spec;
    spec.edge_length = 0.25;
    spec.objects = {{Vec3(2.0, 1.5, 0.0), Vec3(1.0, 1.0, 0.8), 10}};
    const testing::Reconstructed r = testing::reconstruct_room(spec);
    CHECK(r.result.report.open_holes == 0);
    CHECK(r.result.report.failures.empty());
    CHECK(count_boundary_loops(r.result.mesh) == 0);
    CHECK(testing::max_new_vertex_residual(r.result.mesh, r.room.truth) <= 1e-9);
    CHECK(r.result.report.filled_faces.count({2, 0}) == 1);
  }

  TEST_CASE("room without objects is unchanged") {
    RoomSpec spec;
    spec.edge_length = 0.5;
    const testing::Reconstructed r = testing::reconstruct_room(spec);
    const LabeledMesh labeled = apply_segmentation(r.room.furnished, r.segmentation);
    CHECK(r.result.mesh.vertices == labeled.vertices);
    CHECK(r.result.mesh.triangles == labeled.triangles);
    CHECK(r.result.mesh.labels == labeled.labels);
  }

  TEST_CASE("wardrobe in a floor-wall corner fills both elements") {
    RoomSpec spec;
    spec.edge_length = 0.25;
    spec.objects = {{Vec3(0.0, 0.0, 0.0), Vec3(0.6, 1.2, 1.9), 13}};
    const testing::Reconstructed r = testing::reconstruct_room(spec);
    CHECK(r.result.report.open_holes == 0);
    CHECK(r.result.report.filled_faces.count({2, 0}) == 1);
    CHECK(r.result.report.filled_faces.count({1, 0}) == 1);
    CHECK(r.result.report.filled_faces.count({1, 2}) == 1);
    CHECK(testing::max_new_vertex_residual(r.result.mesh, r.room.truth) <= 1e-9);
    CHECK(count_boundary_loops(r.result.mesh) == 0);
  }
}
