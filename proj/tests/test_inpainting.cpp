#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "defurnish/error.hpp"
#include "defurnish/inpainting.hpp"
#include "defurnish/uv_mapping.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace defurnish;

namespace {

std::string hook_command(const std::string& mode) {
  return std::string("'") + DEFURNISH_HOOK_TOOL + "' " + mode + " {texture} {mask} {output}";
}

// w x h raster: Reference everywhere except a centered s x s Fill square.
ChartRaster masked_raster(int w, int h, int s, const std::function<std::array<std::uint8_t, 3>(int, int)>& color) {
  ChartRaster r = make_raster(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool fill = x >= (w - s) / 2 && x < (w + s) / 2 && y >= (h - s) / 2 && y < (h + s) / 2;
      r.coverage[static_cast<std::size_t>(y) * w + x] = fill ? Coverage::Fill : Coverage::Reference;
      r.color.set_rgb(x, y, fill ? std::array<std::uint8_t, 3>{0, 0, 0} : color(x, y));
    }
  }
  r.seed = 5;
  return r;
}

bool reference_identical(const ChartRaster& a, const ChartRaster& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.coverage != b.coverage) return false;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (a.at(x, y) == Coverage::Reference && a.color.rgb(x, y) != b.color.rgb(x, y)) return false;
    }
  }
  return true;
}

std::vector<std::uint32_t> all_faces(const LabeledMesh& m) {
  std::vector<std::uint32_t> faces(m.face_count());
  for (std::uint32_t f = 0; f < faces.size(); ++f) faces[f] = f;
  return faces;
}

// 1 x 1 m floor whose source UVs equal its (x, y) coordinates.
LabeledMesh textured_floor(std::shared_ptr<const TextureImage> texture) {
  LabeledMesh m = testing::grid_mesh(Vec3(0, 0, 0), Vec3(0.25, 0, 0), Vec3(0, 0.25, 0), 4, 4, {2, 0});
  m.corner_uvs.clear();
  for (std::size_t f = 0; f < m.face_count(); ++f) {
    CornerUvs uv;
    for (int k = 0; k < 3; ++k) uv[k] = Vec2(m.corner(f, k).x(), m.corner(f, k).y());
    m.corner_uvs.push_back(uv);
  }
  m.textures = {std::move(texture)};
  return m;
}

std::array<std::uint8_t, 3> checker(double x, double y) {
  const int cell = (static_cast<int>(std::floor(x * 8)) + static_cast<int>(std::floor(y * 8))) % 2;
  return cell ? std::array<std::uint8_t, 3>{250, 20, 90} : std::array<std::uint8_t, 3>{10, 200, 40};
}

std::shared_ptr<TextureImage> checker_texture(int n) {
  auto t = std::make_shared<TextureImage>(n, n, 3, 0);
  for (int row = 0; row < n; ++row) {
    for (int x = 0; x < n; ++x) t->set_rgb(x, row, checker((x + 0.5) / n, 1.0 - (row + 0.5) / n));
  }
  return t;
}

}  // namespace

TEST_SUITE("inpainting") {
  TEST_CASE("identity resample keeps source texels") {
    auto tex = checker_texture(64);
    const LabeledMesh m = textured_floor(tex);
    const ChartFrame frame = orientation_frame(Vec3::UnitZ(), Orientation::Horizontal, Vec3::UnitZ(), Vec3::UnitY());
    const auto charts = assign_texel_density(unwrap_element(m, {2, 0}, all_faces(m), frame), 64.0, 8192);
    const ChartRaster r = rasterize_chart(m, charts[0], Sampling::Nearest);
    REQUIRE(r.width() == 64);
    REQUIRE(r.height() == 64);
    CHECK(r.count(Coverage::Reference) == 64u * 64u);
    CHECK(r.color == *tex);
  }

  TEST_CASE("rotated chart reproduces the checker up to rotation") {
    auto tex = checker_texture(64);
    const LabeledMesh m = textured_floor(tex);
    const ChartFrame rotated{Vec3::UnitY(), Vec3(-1, 0, 0), Vec3::UnitZ()};
    const auto charts = assign_texel_density(unwrap_element(m, {2, 0}, all_faces(m), rotated), 64.0, 8192);
    const ChartRaster r = rasterize_chart(m, charts[0], Sampling::Nearest);
    REQUIRE(r.width() == 64);
    REQUIRE(r.height() == 64);
    int worst = 0;
    for (int row = 0; row < 64; ++row) {
      for (int col = 0; col < 64; ++col) {
        // Chart u runs along +y, chart v along -x.
        const double y = (col + 0.5) / 64.0;
        const double x = (row + 0.5) / 64.0;
        const auto want = checker(x, y);
        const auto got = r.color.rgb(col, row);
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(int(want[c]) - int(got[c])));
      }
    }
    CHECK(worst <= 1);
  }

  TEST_CASE("new faces become Fill") {
    LabeledMesh m = testing::grid_mesh(Vec3(0, 0, 0), Vec3(0.25, 0, 0), Vec3(0, 0.25, 0), 4, 4, {2, 0});
    std::fill(m.face_is_new.begin(), m.face_is_new.end(), 1);
    const ChartFrame frame = orientation_frame(Vec3::UnitZ(), Orientation::Horizontal, Vec3::UnitZ(), Vec3::UnitY());
    const auto charts = assign_texel_density(unwrap_element(m, {2, 0}, all_faces(m), frame), 32.0, 8192);
    const ChartRaster r = rasterize_chart(m, charts[0]);
    CHECK(r.count(Coverage::Fill) == 32u * 32u);
    CHECK(r.count(Coverage::Reference) == 0);
  }

  TEST_CASE("old face without source texture") {
    const LabeledMesh m = testing::grid_mesh(Vec3(0, 0, 0), Vec3(0.25, 0, 0), Vec3(0, 0.25, 0), 1, 1, {2, 0});
    const ChartFrame frame = orientation_frame(Vec3::UnitZ(), Orientation::Horizontal, Vec3::UnitZ(), Vec3::UnitY());
    const auto charts = assign_texel_density(unwrap_element(m, {2, 0}, all_faces(m), frame), 32.0, 8192);
    try {
      rasterize_chart(m, charts[0]);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InconsistentInput);
    }
  }

  TEST_CASE("constant gray fills exactly") {
    const ChartRaster r = masked_raster(96, 80, 30, [](int, int) { return std::array<std::uint8_t, 3>{93, 93, 93}; });
    const ChartRaster out = inpaint_exemplar(r, InpaintConfig{});
    CHECK(reference_identical(r, out));
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) CHECK(out.color.rgb(x, y) == std::array<std::uint8_t, 3>{93, 93, 93});
    }
  }

  TEST_CASE("stripes continue through the hole") {
    auto stripes = [](int x, int) {
      const std::uint8_t v = oracle::stripe(x, 8, 220, 30);
      return std::array<std::uint8_t, 3>{v, v, v};
    };
    const ChartRaster r = masked_raster(128, 128, 32, stripes);
    const ChartRaster out = inpaint_exemplar(r, InpaintConfig{});
    CHECK(reference_identical(r, out));
    double err = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < 128; ++y) {
      for (int x = 0; x < 128; ++x) {
        if (r.at(x, y) != Coverage::Fill) continue;
        const auto want = stripes(x, y);
        const auto got = out.color.rgb(x, y);
        for (int c = 0; c < 3; ++c) err += std::abs(int(want[c]) - int(got[c]));
        n += 3;
      }
    }
    CHECK(err / n <= 10.0);
  }

  TEST_CASE("nothing to copy from") {
    ChartRaster r = make_raster(16, 16);
    std::fill(r.coverage.begin(), r.coverage.end(), Coverage::Fill);
    try {
      inpaint_exemplar(r, InpaintConfig{});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InsufficientReference);
    }
  }

  TEST_CASE("config checks") {
    InpaintConfig c;
    c.patch_size = 4;
    CHECK_THROWS_AS(c.check(), Error);
    c.patch_size = 1;
    CHECK_THROWS_AS(c.check(), Error);
    ExternalHook h;
    h.command = "cp {texture} {output}";
    CHECK_THROWS_AS(h.check(), Error);
  }

  TEST_CASE("external hook modes") {
    const ChartRaster r =
        masked_raster(40, 30, 10, [](int x, int y) { return std::array<std::uint8_t, 3>{std::uint8_t(x * 5), std::uint8_t(y * 7), 17}; });
    ExternalHook hook;
    hook.timeout_seconds = 20;

    hook.command = hook_command("copy");
    const ChartRaster same = inpaint_external(r, hook);
    CHECK(same.color == r.color);

    hook.command = hook_command("red");
    const ChartRaster red = inpaint_external(r, hook);
    CHECK(reference_identical(r, red));
    for (int y = 0; y < 30; ++y) {
      for (int x = 0; x < 40; ++x) {
        if (r.at(x, y) == Coverage::Fill) CHECK(red.color.rgb(x, y) == std::array<std::uint8_t, 3>{255, 0, 0});
      }
    }

    hook.command = hook_command("fail");
    try {
      inpaint_external(r, hook);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::CommandFailed);
      CHECK(std::string(e.what()).find("hook refused the input") != std::string::npos);
    }

    hook.command = hook_command("wrong_size");
    try {
      inpaint_external(r, hook);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::SizeMismatch);
    }

    hook.command = hook_command("no_output");
    try {
      inpaint_external(r, hook);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::CommandFailed);
    }

    hook.command = hook_command("sleep");
    hook.timeout_seconds = 0.5;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      inpaint_external(r, hook);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Timeout);
    }
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(10));
  }

  TEST_CASE("inpaint_all keeps charts independent") {
    auto gray = [](int, int) { return std::array<std::uint8_t, 3>{60, 60, 60}; };
    auto ramp = [](int x, int y) { return std::array<std::uint8_t, 3>{std::uint8_t(x * 3), std::uint8_t(y * 3), 99}; };
    ChartRaster a = masked_raster(48, 48, 12, gray);
    a.element = {1, 0};
    ChartRaster b = masked_raster(64, 40, 16, ramp);
    b.element = {2, 0};
    ChartRaster c = masked_raster(20, 20, 0, ramp);
    c.element = {3, 0};

    const InpaintOutcome ab = inpaint_all({a, b, c}, InpaintConfig{}, std::nullopt, 42);
    const InpaintOutcome ba = inpaint_all({b, a, c}, InpaintConfig{}, std::nullopt, 42);
    REQUIRE(ab.failures.empty());
    CHECK(ab.rasters[0].color == ba.rasters[1].color);
    CHECK(ab.rasters[1].color == ba.rasters[0].color);
    CHECK(ab.rasters[2].color == c.color);

    InpaintRunOptions wide;
    wide.jobs = 3;
    const InpaintOutcome par = inpaint_all({a, b, c}, InpaintConfig{}, std::nullopt, 42, wide);
    for (int i = 0; i < 3; ++i) CHECK(par.rasters[i].color == ab.rasters[i].color);
  }

  TEST_CASE("failed hook keeps the placeholder and reports") {
    ChartRaster a = masked_raster(24, 24, 8, [](int, int) { return std::array<std::uint8_t, 3>{1, 2, 3}; });
    ExternalHook hook;
    hook.command = hook_command("fail");
    const InpaintOutcome out = inpaint_all({a}, InpaintConfig{}, hook, 42);
    REQUIRE(out.failures.size() == 1);
    CHECK(out.failures[0].kind == ErrorKind::CommandFailed);
    CHECK(out.rasters[0].color == a.color);
  }
}
