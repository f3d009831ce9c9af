#include <algorithm>
#include <cmath>

#include "defurnish/error.hpp"
#include "defurnish/uv_mapping.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace defurnish;

namespace {

std::vector<std::uint32_t> all_faces(const LabeledMesh& m) {
  std::vector<std::uint32_t> faces(m.face_count());
  for (std::uint32_t f = 0; f < faces.size(); ++f) faces[f] = f;
  return faces;
}

LabeledMesh wall_2x3() {
  return testing::grid_mesh(Vec3(0, 0, 0), Vec3(0, 0.5, 0), Vec3(0, 0, 0.5), 4, 6, {1, 0});
}

const ChartFrame wall_frame() {
  return orientation_frame(Vec3::UnitX(), Orientation::Vertical, Vec3::UnitZ(), Vec3::UnitY());
}

}  // namespace

TEST_SUITE("uv_mapping") {
  TEST_CASE("semantic seams") {
    LabeledMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    m.add_face({0, 1, 2}, {2, 0}, false);
    m.add_face({0, 2, 3}, {2, 0}, false);
    m.add_face({1, 0, 4}, {1, 0}, false);
    const auto seams = mark_semantic_seams(m);
    auto has = [&](Edge e) { return std::find(seams.begin(), seams.end(), e) != seams.end(); };
    CHECK(has(Edge::of(0, 1)));
    CHECK_FALSE(has(Edge::of(0, 2)));
    CHECK(has(Edge::of(2, 3)));
  }

  TEST_CASE("orientation frames") {
    const ChartFrame w = wall_frame();
    CHECK(w.v.isApprox(Vec3::UnitZ()));
    CHECK((w.project(Vec3(0, 0.3, 1.7)) - w.project(Vec3(0, 0.3, 0.7))).isApprox(Vec2(0, 1)));
    CHECK(w.u.cross(w.v).isApprox(w.normal));

    const ChartFrame f = orientation_frame(Vec3::UnitZ(), Orientation::Horizontal, Vec3::UnitZ(), Vec3::UnitY());
    CHECK(f.v.isApprox(Vec3::UnitY()));

    try {
      orientation_frame(Vec3::UnitY(), Orientation::Horizontal, Vec3::UnitZ(), Vec3::UnitY());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateFrame);
    }
  }

  TEST_CASE("flat wall is an isometric chart") {
    const LabeledMesh m = wall_2x3();
    const auto charts = unwrap_element(m, {1, 0}, all_faces(m), wall_frame());
    REQUIRE(charts.size() == 1);
    CHECK(charts[0].extent().isApprox(Vec2(2, 3)));
    const DistortionStats d = compute_distortion(m, charts[0]);
    for (double s : d.stretch) CHECK(std::abs(s - 1.0) <= 1e-9);
    CHECK(adjacency_preservation(m, charts) == 1.0);
  }

  TEST_CASE("trench splits the floor into two charts") {
    const LabeledMesh m = testing::grid_mesh(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), 10, 4, {2, 0});
    std::vector<std::uint32_t> faces;
    for (std::uint32_t f = 0; f < m.face_count(); ++f) {
      if ((f / 2) % 10 != 5) faces.push_back(f);
    }
    const ChartFrame frame = orientation_frame(Vec3::UnitZ(), Orientation::Horizontal, Vec3::UnitZ(), Vec3::UnitY());
    const auto charts = unwrap_element(m, {2, 0}, faces, frame);
    REQUIRE(charts.size() == 2);
    CHECK(charts[0].face_ids.size() + charts[1].face_ids.size() == faces.size());
  }

  TEST_CASE("folded face") {
    LabeledMesh m = wall_2x3();
    const auto t = m.triangles[0];
    m.add_face({t[0], t[2], t[1]}, {1, 0}, false);
    try {
      unwrap_element(m, {1, 0}, all_faces(m), wall_frame());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::FoldOver);
    }
  }

  TEST_CASE("stretch of a scaled chart") {
    const LabeledMesh m = wall_2x3();
    auto charts = unwrap_element(m, {1, 0}, all_faces(m), wall_frame());
    UvChart scaled = charts[0];
    for (CornerUvs& c : scaled.uvs) {
      for (Vec2& p : c) p.x() *= 2.0;
    }
    const DistortionStats d = compute_distortion(m, scaled);
    const double expect = oracle::l2_stretch(2.0, 1.0);
    CHECK(std::abs(expect - 1.5811388300841898) < 1e-12);
    for (double s : d.stretch) CHECK(std::abs(s - expect) <= 1e-9);

    UvChart flat = charts[0];
    flat.uvs[0][2] = flat.uvs[0][0] + 0.5 * (flat.uvs[0][1] - flat.uvs[0][0]);
    try {
      compute_distortion(m, flat);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateTriangle);
    }
  }

  TEST_CASE("texel density") {
    const LabeledMesh m = wall_2x3();
    const auto charts = assign_texel_density(unwrap_element(m, {1, 0}, all_faces(m), wall_frame()), 100.0, 8192);
    CHECK(charts[0].texel_size() == std::array<int, 2>{200, 300});
    for (double s : compute_distortion(m, charts[0]).stretch) CHECK(std::abs(s - 1.0) <= 1e-9);

    const LabeledMesh big = testing::grid_mesh(Vec3(0, 0, 0), Vec3(50, 0, 0), Vec3(0, 25, 0), 2, 4, {2, 0});
    const ChartFrame frame = orientation_frame(Vec3::UnitZ(), Orientation::Horizontal, Vec3::UnitZ(), Vec3::UnitY());
    const auto capped = assign_texel_density(unwrap_element(big, {2, 0}, all_faces(big), frame), 100.0, 4096);
    const auto size = capped[0].texel_size();
    CHECK(capped[0].downscaled);
    CHECK(std::max(size[0], size[1]) <= 4096);
    CHECK(std::abs(capped[0].extent().x() - capped[0].extent().y()) < 1e-9);

    try {
      assign_texel_density(charts, 0.0, 4096);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidArgument);
    }
  }

  TEST_CASE("adjacency preservation counts") {
    const LabeledMesh strip = testing::grid_mesh(Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), 2, 1, {1, 0});
    auto a = unwrap_element(strip, {1, 0}, {0, 1}, wall_frame());
    const auto b = unwrap_element(strip, {1, 0}, {2, 3}, wall_frame());
    a.insert(a.end(), b.begin(), b.end());
    CHECK(std::abs(adjacency_preservation(strip, a) - 2.0 / 3.0) < 1e-12);

    LabeledMesh lonely;
    lonely.vertices = {Vec3(0, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(0, 1, 1)};
    lonely.add_face({0, 1, 2}, {1, 0}, false);
    lonely.add_face({1, 3, 2}, {1, 1}, false);
    auto c = unwrap_element(lonely, {1, 0}, {0}, wall_frame());
    const auto d = unwrap_element(lonely, {1, 1}, {1}, wall_frame());
    c.insert(c.end(), d.begin(), d.end());
    CHECK(adjacency_preservation(lonely, c) == 1.0);
  }

  TEST_CASE("orient_chart keeps coordinates rigid") {
    const LabeledMesh m = wall_2x3();
    const ChartFrame odd{Vec3::UnitZ(), Vec3(0, -1, 0), Vec3::UnitX()};
    const auto charts = unwrap_element(m, {1, 0}, all_faces(m), odd);
    const UvChart oriented = orient_chart(charts[0], Orientation::Vertical, Vec3::UnitZ(), Vec3::UnitY());
    CHECK(oriented.frame.v.isApprox(Vec3::UnitZ()));
    for (double s : compute_distortion(m, oriented).stretch) CHECK(std::abs(s - 1.0) <= 1e-9);
    CHECK(oriented.extent().isApprox(Vec2(2, 3)));
  }
}
