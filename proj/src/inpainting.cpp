#include "defurnish/inpainting.hpp"

#include "defurnish/parallel.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace defurnish {

std::size_t ChartRaster::count(Coverage c) const { return static_cast<std::size_t>(std::count(coverage.begin(), coverage.end(), c)); }

ChartRaster make_raster(int width, int height) {
  ChartRaster r;
  r.color = TextureImage(width, height, 3, 0);
  r.coverage.assign(static_cast<std::size_t>(width) * height, Coverage::Outside);
  return r;
}

void InpaintConfig::check() const {
  if (patch_size < 3 || patch_size % 2 == 0) throw Error(ErrorKind::InvalidArgument, "patch_size must be odd and >= 3");
  if (pyramid_levels < 0) throw Error(ErrorKind::InvalidArgument, "pyramid_levels must be >= 1 (or 0 for automatic)");
  if (iterations_per_level < 1) throw Error(ErrorKind::InvalidArgument, "iterations_per_level must be >= 1");
}

int InpaintConfig::levels_for(int width, int height) const {
  if (pyramid_levels > 0) return pyramid_levels;
  const double m = std::min(width, height);
  return std::max(1, static_cast<int>(std::ceil(std::log2(m / 32.0))));
}

void ExternalHook::check() const {
  for (const char* p : {"{texture}", "{mask}", "{output}"}) {
    if (command.find(p) == std::string::npos) {
      throw Error(ErrorKind::InvalidArgument, std::string("hook command lacks the ") + p + " placeholder");
    }
  }
  if (!(timeout_seconds > 0.0)) throw Error(ErrorKind::InvalidArgument, "hook timeout must be positive");
}

ChartRaster rasterize_chart(const LabeledMesh& mesh, const UvChart& chart, Sampling sampling) {
  const auto [w, h] = chart.texel_size();
  ChartRaster raster = make_raster(w, h);
  raster.element = chart.element;
  raster.component = chart.component;
  for (std::size_t i = 0; i < chart.face_ids.size(); ++i) {
    const std::uint32_t f = chart.face_ids[i];
    const CornerUvs& t = chart.uvs[i];
    const bool is_new = mesh.face_is_new[f] != 0;
    const TextureImage* tex = nullptr;
    if (!is_new) {
      tex = mesh.texture_for_face(f);
      if (!mesh.face_has_uv(f) || !tex) {
        throw Error(ErrorKind::InconsistentInput, "face " + std::to_string(f) + " has no source texture mapping");
      }
    }
    const double denom = cross2(t[0], t[1], t[2]);
    if (denom == 0.0) continue;
    const double lo_x = std::min({t[0].x(), t[1].x(), t[2].x()});
    const double hi_x = std::max({t[0].x(), t[1].x(), t[2].x()});
    const double lo_y = std::min({t[0].y(), t[1].y(), t[2].y()});
    const double hi_y = std::max({t[0].y(), t[1].y(), t[2].y()});
    const int x0 = std::max(0, static_cast<int>(std::floor(lo_x - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(hi_x)));
    const int y0 = std::max(0, static_cast<int>(std::floor(lo_y - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(hi_y)));
    constexpr double eps = 1e-9;
    for (int yu = y0; yu <= y1; ++yu) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p(x + 0.5, yu + 0.5);
        const double b0 = cross2(p, t[1], t[2]) / denom;
        const double b1 = cross2(t[0], p, t[2]) / denom;
        const double b2 = 1.0 - b0 - b1;
        if (b0 < -eps || b1 < -eps || b2 < -eps) continue;
        const int row = h - 1 - yu;
        const std::size_t idx = static_cast<std::size_t>(row) * w + x;
        if (is_new) {
          raster.coverage[idx] = Coverage::Fill;
          raster.color.set_rgb(x, row, {0, 0, 0});
          continue;
        }
        if (raster.coverage[idx] == Coverage::Fill) continue;
        const CornerUvs& src = mesh.corner_uvs[f];
        const Vec2 uv = b0 * src[0] + b1 * src[1] + b2 * src[2];
        const auto c = sample(*tex, uv, sampling);
        raster.color.set_rgb(x, row,
                             {static_cast<std::uint8_t>(std::lround(c[0])), static_cast<std::uint8_t>(std::lround(c[1])),
                              static_cast<std::uint8_t>(std::lround(c[2]))});
        raster.coverage[idx] = Coverage::Reference;
      }
    }
  }
  return raster;
}

namespace {

using Color = std::array<double, 3>;

struct Level {
  int w = 0;
  int h = 0;
  std::vector<Color> color;
  std::vector<Coverage> cov;

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * w + x; }
};

Level downsample(const Level& fine) {
  Level c;
  c.w = (fine.w + 1) / 2;
  c.h = (fine.h + 1) / 2;
  c.color.assign(static_cast<std::size_t>(c.w) * c.h, Color{0, 0, 0});
  c.cov.assign(c.color.size(), Coverage::Outside);
  for (int y = 0; y < c.h; ++y) {
    for (int x = 0; x < c.w; ++x) {
      bool fill = false;
      int refs = 0;
      Color acc{0, 0, 0};
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int fx = 2 * x + dx;
          const int fy = 2 * y + dy;
          if (fx >= fine.w || fy >= fine.h) continue;
          const std::size_t i = fine.index(fx, fy);
          if (fine.cov[i] == Coverage::Fill) fill = true;
          if (fine.cov[i] == Coverage::Reference) {
            ++refs;
            for (int k = 0; k < 3; ++k) acc[k] += fine.color[i][k];
          }
        }
      }
      const std::size_t j = c.index(x, y);
      if (fill) {
        c.cov[j] = Coverage::Fill;
      } else if (refs > 0) {
        c.cov[j] = Coverage::Reference;
        for (int k = 0; k < 3; ++k) c.color[j][k] = acc[k] / refs;
      }
    }
  }
  return c;
}

// Onion-peel diffusion from the Reference region into Fill texels.
void diffuse_fill(Level& lv) {
  std::vector<std::uint8_t> known(lv.cov.size(), 0);
  Color mean{0, 0, 0};
  std::size_t refs = 0;
  for (std::size_t i = 0; i < lv.cov.size(); ++i) {
    if (lv.cov[i] == Coverage::Reference) {
      known[i] = 1;
      for (int k = 0; k < 3; ++k) mean[k] += lv.color[i][k];
      ++refs;
    }
  }
  for (int k = 0; k < 3; ++k) mean[k] /= std::max<std::size_t>(refs, 1);
  for (;;) {
    std::vector<std::pair<std::size_t, Color>> ring;
    for (int y = 0; y < lv.h; ++y) {
      for (int x = 0; x < lv.w; ++x) {
        const std::size_t i = lv.index(x, y);
        if (lv.cov[i] != Coverage::Fill || known[i]) continue;
        Color acc{0, 0, 0};
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx;
            const int ny = y + dy;
            if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= lv.w || ny >= lv.h) continue;
            const std::size_t j = lv.index(nx, ny);
            if (!known[j]) continue;
            for (int k = 0; k < 3; ++k) acc[k] += lv.color[j][k];
            ++n;
          }
        }
        if (n > 0) ring.emplace_back(i, Color{acc[0] / n, acc[1] / n, acc[2] / n});
      }
    }
    if (ring.empty()) break;
    for (const auto& [i, c] : ring) {
      lv.color[i] = c;
      known[i] = 1;
    }
  }
  for (std::size_t i = 0; i < lv.cov.size(); ++i) {
    if (lv.cov[i] == Coverage::Fill && !known[i]) lv.color[i] = mean;
  }
}

// Summed-area table of an indicator.
std::vector<int> integral(const Level& lv, Coverage target, bool equal) {
  std::vector<int> s(static_cast<std::size_t>(lv.w + 1) * (lv.h + 1), 0);
  for (int y = 0; y < lv.h; ++y) {
    for (int x = 0; x < lv.w; ++x) {
      const bool hit = (lv.cov[lv.index(x, y)] == target) == equal;
      s[static_cast<std::size_t>(y + 1) * (lv.w + 1) + x + 1] = (hit ? 1 : 0) + s[static_cast<std::size_t>(y) * (lv.w + 1) + x + 1] +
                                                                 s[static_cast<std::size_t>(y + 1) * (lv.w + 1) + x] -
                                                                 s[static_cast<std::size_t>(y) * (lv.w + 1) + x];
    }
  }
  return s;
}

int box_sum(const std::vector<int>& s, int w, int x0, int y0, int x1, int y1) {
  const auto W = static_cast<std::size_t>(w + 1);
  return s[(y1 + 1) * W + x1 + 1] - s[y0 * W + x1 + 1] - s[(y1 + 1) * W + x0] + s[y0 * W + x0];
}

struct Nnf {
  int w = 0;
  int h = 0;
  std::vector<std::int32_t> sx;  // -1 where no target
  std::vector<std::int32_t> sy;
};

Nnf patch_match(Level& lv, int radius, int iterations, std::uint64_t seed, int level_index, const Nnf* coarse) {
  Nnf nnf;
  nnf.w = lv.w;
  nnf.h = lv.h;
  nnf.sx.assign(static_cast<std::size_t>(lv.w) * lv.h, -1);
  nnf.sy.assign(nnf.sx.size(), -1);
  if (lv.w < 2 * radius + 1 || lv.h < 2 * radius + 1) return nnf;

  const std::vector<int> non_ref = integral(lv, Coverage::Reference, false);
  const std::vector<int> fill = integral(lv, Coverage::Fill, true);
  std::vector<std::uint8_t> valid(lv.cov.size(), 0);
  std::vector<std::pair<int, int>> sources;
  for (int y = radius; y < lv.h - radius; ++y) {
    for (int x = radius; x < lv.w - radius; ++x) {
      if (box_sum(non_ref, lv.w, x - radius, y - radius, x + radius, y + radius) == 0) {
        valid[lv.index(x, y)] = 1;
        sources.emplace_back(x, y);
      }
    }
  }
  if (sources.empty()) return nnf;
  std::vector<std::pair<int, int>> targets;
  for (int y = 0; y < lv.h; ++y) {
    for (int x = 0; x < lv.w; ++x) {
      const int x0 = std::max(0, x - radius);
      const int y0 = std::max(0, y - radius);
      const int x1 = std::min(lv.w - 1, x + radius);
      const int y1 = std::min(lv.h - 1, y + radius);
      if (box_sum(fill, lv.w, x0, y0, x1, y1) > 0) targets.emplace_back(x, y);
    }
  }
  auto is_valid = [&](int x, int y) { return x >= 0 && y >= 0 && x < lv.w && y < lv.h && valid[lv.index(x, y)]; };

  auto distance = [&](int tx, int ty, int sx, int sy, double limit) {
    double d = 0.0;
    for (int dy = -radius; dy <= radius; ++dy) {
      const int qy = ty + dy;
      if (qy < 0 || qy >= lv.h) continue;
      for (int dx = -radius; dx <= radius; ++dx) {
        const int qx = tx + dx;
        if (qx < 0 || qx >= lv.w) continue;
        const std::size_t q = lv.index(qx, qy);
        if (lv.cov[q] == Coverage::Outside) continue;
        const Color& a = lv.color[q];
        const Color& b = lv.color[lv.index(sx + dx, sy + dy)];
        d += (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]);
      }
      if (d >= limit) return d;
    }
    return d;
  };

  Rng init_rng(derive_seed(seed, level_index, -1));
  for (const auto& [x, y] : targets) {
    const std::size_t i = lv.index(x, y);
    bool set = false;
    if (coarse) {
      const std::size_t ci = static_cast<std::size_t>(std::min(y / 2, coarse->h - 1)) * coarse->w + std::min(x / 2, coarse->w - 1);
      if (coarse->sx[ci] >= 0) {
        const int cx = 2 * coarse->sx[ci] + (x % 2);
        const int cy = 2 * coarse->sy[ci] + (y % 2);
        if (is_valid(cx, cy)) {
          nnf.sx[i] = cx;
          nnf.sy[i] = cy;
          set = true;
        }
      }
    }
    if (!set) {
      const auto& s = sources[init_rng.below(sources.size())];
      nnf.sx[i] = s.first;
      nnf.sy[i] = s.second;
    }
  }

  std::vector<Color> acc(lv.cov.size());
  std::vector<int> cnt(lv.cov.size());
  const int max_radius = std::max(lv.w, lv.h);
  for (int it = 0; it < iterations; ++it) {
    Rng rng(derive_seed(seed, level_index, it));
    const bool forward = it % 2 == 0;
    const int step = forward ? 1 : -1;
    for (std::size_t n = 0; n < targets.size(); ++n) {
      const auto [x, y] = targets[forward ? n : targets.size() - 1 - n];
      const std::size_t i = lv.index(x, y);
      int bx = nnf.sx[i];
      int by = nnf.sy[i];
      double best = distance(x, y, bx, by, std::numeric_limits<double>::infinity());
      auto consider = [&](int cx, int cy) {
        if (!is_valid(cx, cy) || (cx == bx && cy == by)) return;
        const double d = distance(x, y, cx, cy, best);
        if (d < best) {
          best = d;
          bx = cx;
          by = cy;
        }
      };
      for (const auto& [nx, ny] : {std::pair<int, int>{x - step, y}, std::pair<int, int>{x, y - step}}) {
        if (nx < 0 || ny < 0 || nx >= lv.w || ny >= lv.h) continue;
        const std::size_t j = lv.index(nx, ny);
        if (nnf.sx[j] < 0) continue;
        consider(nnf.sx[j] + (x - nx), nnf.sy[j] + (y - ny));
      }
      for (int r = max_radius; r >= 1; r /= 2) {
        const int cx = bx + static_cast<int>(rng.below(2 * static_cast<std::uint64_t>(r) + 1)) - r;
        const int cy = by + static_cast<int>(rng.below(2 * static_cast<std::uint64_t>(r) + 1)) - r;
        consider(cx, cy);
      }
      nnf.sx[i] = bx;
      nnf.sy[i] = by;
    }
    // Vote.
    std::fill(acc.begin(), acc.end(), Color{0, 0, 0});
    std::fill(cnt.begin(), cnt.end(), 0);
    for (const auto& [x, y] : targets) {
      const std::size_t i = lv.index(x, y);
      for (int dy = -radius; dy <= radius; ++dy) {
        const int py = y + dy;
        if (py < 0 || py >= lv.h) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int px = x + dx;
          if (px < 0 || px >= lv.w) continue;
          const std::size_t p = lv.index(px, py);
          if (lv.cov[p] != Coverage::Fill) continue;
          const Color& c = lv.color[lv.index(nnf.sx[i] + dx, nnf.sy[i] + dy)];
          for (int k = 0; k < 3; ++k) acc[p][k] += c[k];
          ++cnt[p];
        }
      }
    }
    for (std::size_t p = 0; p < lv.cov.size(); ++p) {
      if (lv.cov[p] == Coverage::Fill && cnt[p] > 0) {
        for (int k = 0; k < 3; ++k) lv.color[p][k] = acc[p][k] / cnt[p];
      }
    }
  }
  return nnf;
}

}  // namespace

ChartRaster inpaint_exemplar(const ChartRaster& raster, const InpaintConfig& config) {
  config.check();
  if (raster.count(Coverage::Reference) == 0) {
    throw Error(ErrorKind::InsufficientReference, "chart has no reference texels");
  }
  if (raster.count(Coverage::Fill) == 0) return raster;

  std::vector<Level> pyramid(1);
  Level& base = pyramid[0];
  base.w = raster.width();
  base.h = raster.height();
  base.cov = raster.coverage;
  base.color.resize(base.cov.size());
  for (int y = 0; y < base.h; ++y) {
    for (int x = 0; x < base.w; ++x) {
      const auto c = raster.color.rgb(x, y);
      base.color[base.index(x, y)] = {double(c[0]), double(c[1]), double(c[2])};
    }
  }
  const int levels = config.levels_for(base.w, base.h);
  pyramid.reserve(levels);
  for (int l = 1; l < levels; ++l) pyramid.push_back(downsample(pyramid.back()));

  const int radius = config.patch_size / 2;
  std::optional<Nnf> previous;
  for (int l = levels - 1; l >= 0; --l) {
    Level& lv = pyramid[l];
    if (l == levels - 1) {
      diffuse_fill(lv);
    } else {
      const Level& coarse = pyramid[l + 1];
      for (int y = 0; y < lv.h; ++y) {
        for (int x = 0; x < lv.w; ++x) {
          const std::size_t i = lv.index(x, y);
          if (lv.cov[i] == Coverage::Fill) lv.color[i] = coarse.color[coarse.index(x / 2, y / 2)];
        }
      }
    }
    Nnf nnf = patch_match(lv, radius, config.iterations_per_level, raster.seed, l, previous ? &*previous : nullptr);
    previous = std::move(nnf);
  }

  const Level& finest = pyramid[0];
  ChartRaster out = raster;
  for (int y = 0; y < finest.h; ++y) {
    for (int x = 0; x < finest.w; ++x) {
      const std::size_t i = finest.index(x, y);
      if (finest.cov[i] != Coverage::Fill) continue;
      std::array<std::uint8_t, 3> c{};
      for (int k = 0; k < 3; ++k) c[k] = static_cast<std::uint8_t>(std::clamp(std::lround(finest.color[i][k]), 0L, 255L));
      out.color.set_rgb(x, y, c);
    }
  }
  return out;
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::filesystem::path hook_directory() {
  static std::atomic<std::uint64_t> counter{0};
  const char* env = std::getenv("DEFURNISH_TMPDIR");
  const std::filesystem::path base = env && *env ? std::filesystem::path(env) : std::filesystem::temp_directory_path();
  std::filesystem::path dir =
      base / ("defurnish-hook-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create hook directory " + dir.string() + ": " + ec.message());
  return dir;
}

struct DirectoryGuard {
  std::filesystem::path path;
  ~DirectoryGuard() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

std::string read_text(const std::filesystem::path& p, std::size_t limit) {
  std::ifstream in(p, std::ios::binary);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (s.size() > limit) s = s.substr(s.size() - limit);
  return s;
}

}  // namespace

ChartRaster inpaint_external(const ChartRaster& raster, const ExternalHook& hook) {
  hook.check();
  const DirectoryGuard guard{hook_directory()};
  const auto texture_path = guard.path / "texture.png";
  const auto mask_path = guard.path / "mask.png";
  const auto output_path = guard.path / "output.png";
  const auto stderr_path = guard.path / "stderr.txt";
  write_png(raster.color, texture_path);
  TextureImage mask(raster.width(), raster.height(), 1, 0);
  for (std::size_t i = 0; i < raster.coverage.size(); ++i) {
    if (raster.coverage[i] == Coverage::Fill) mask.pixels[i] = 255;
  }
  write_png(mask, mask_path);

  std::string command = hook.command;
  replace_all(command, "{texture}", shell_quote(texture_path.string()));
  replace_all(command, "{mask}", shell_quote(mask_path.string()));
  replace_all(command, "{output}", shell_quote(output_path.string()));
  const std::string err_file = stderr_path.string();
  const std::string workdir = hook.working_directory.string();

  const pid_t pid = ::fork();
  if (pid < 0) throw Error(ErrorKind::CommandFailed, "fork failed");
  if (pid == 0) {
    ::setpgid(0, 0);
    if (!workdir.empty() && ::chdir(workdir.c_str()) != 0) ::_exit(126);
    const int fd = ::open(err_file.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      ::dup2(fd, 2);
      ::dup2(fd, 1);
      ::close(fd);
    }
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  const auto start = std::chrono::steady_clock::now();
  int status = 0;
  for (;;) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) throw Error(ErrorKind::CommandFailed, "waitpid failed");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > hook.timeout_seconds) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      throw Error(ErrorKind::Timeout, "hook timed out after " + std::to_string(hook.timeout_seconds) + " s");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    throw Error(ErrorKind::CommandFailed,
                "hook exited with status " + std::to_string(code) + ": " + read_text(stderr_path, 4096));
  }
  if (!std::filesystem::exists(output_path)) throw Error(ErrorKind::CommandFailed, "hook wrote no output image");
  const TextureImage result = read_image(output_path);
  if (result.width != raster.width() || result.height != raster.height()) {
    throw Error(ErrorKind::SizeMismatch, "hook output is " + std::to_string(result.width) + "x" +
                                             std::to_string(result.height) + ", expected " +
                                             std::to_string(raster.width()) + "x" + std::to_string(raster.height()));
  }
  ChartRaster out = raster;
  for (int y = 0; y < raster.height(); ++y) {
    for (int x = 0; x < raster.width(); ++x) {
      if (raster.at(x, y) == Coverage::Fill) out.color.set_rgb(x, y, result.rgb(x, y));
    }
  }
  return out;
}

namespace {

class Semaphore {
 public:
  explicit Semaphore(int n) : free_(std::max(1, n)) {}
  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return free_ > 0; });
    --free_;
  }
  void release() {
    {
      std::lock_guard lock(mutex_);
      ++free_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int free_;
};

double reference_deviation(const ChartRaster& r) {
  double sum[3] = {0, 0, 0};
  double sq[3] = {0, 0, 0};
  std::size_t n = 0;
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) {
      if (r.at(x, y) != Coverage::Reference) continue;
      const auto c = r.color.rgb(x, y);
      for (int k = 0; k < 3; ++k) {
        sum[k] += c[k];
        sq[k] += double(c[k]) * c[k];
      }
      ++n;
    }
  }
  if (n == 0) return 0.0;
  double var = 0.0;
  for (int k = 0; k < 3; ++k) var += sq[k] / n - (sum[k] / n) * (sum[k] / n);
  return std::sqrt(std::max(0.0, var / 3.0));
}

}  // namespace

InpaintOutcome inpaint_all(std::vector<ChartRaster> rasters, const InpaintConfig& config,
                           const std::optional<ExternalHook>& hook, std::uint64_t global_seed,
                           const InpaintRunOptions& options) {
  config.check();
  if (hook) hook->check();
  InpaintOutcome outcome;
  for (ChartRaster& r : rasters) r.seed = derive_seed(global_seed, r.element.class_id, r.element.instance_id);
  std::vector<std::optional<ChartFailure>> failures(rasters.size());
  std::vector<double> deviation(rasters.size(), 0.0);
  Semaphore hooks(options.max_concurrent_hooks);
  outcome.rasters = rasters;
  parallel_for(rasters.size(), options.jobs, [&](std::size_t i) {
    const ChartRaster& r = rasters[i];
    deviation[i] = reference_deviation(r);
    if (r.count(Coverage::Fill) == 0) return;
    try {
      if (hook) {
        hooks.acquire();
        try {
          outcome.rasters[i] = inpaint_external(r, *hook);
        } catch (...) {
          hooks.release();
          throw;
        }
        hooks.release();
      } else {
        outcome.rasters[i] = inpaint_exemplar(r, config);
      }
    } catch (const Error& e) {
      failures[i] = ChartFailure{i, r.element, e.kind(), e.what()};
    }
  });
  for (std::size_t i = 0; i < rasters.size(); ++i) {
    if (failures[i]) outcome.failures.push_back(*failures[i]);
    if (deviation[i] > options.variance_warning) {
      std::ostringstream msg;
      msg << "chart " << i << " (" << rasters[i].element.class_id << "," << rasters[i].element.instance_id
          << ") reference color deviation " << std::lround(deviation[i]) << " exceeds " << options.variance_warning;
      outcome.warnings.push_back(msg.str());
    }
  }
  return outcome;
}

}  // namespace defurnish
