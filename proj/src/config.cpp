#include "defurnish/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace defurnish {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt(const Vec3& v) { return fmt(v.x()) + " " + fmt(v.y()) + " " + fmt(v.z()); }

[[noreturn]] void bad(int line, const std::string& key, const std::string& what) {
  throw Error(ErrorKind::Parse, "config line " + std::to_string(line) + " (" + key + "): " + what);
}

double to_double(const std::string& s, int line, const std::string& key) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) bad(line, key, "expected a number, got '" + s + "'");
  return v;
}

long long to_int(const std::string& s, int line, const std::string& key) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) bad(line, key, "expected an integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s, int line, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad(line, key, "expected true or false, got '" + s + "'");
}

Vec3 to_vec3(const std::string& s, int line, const std::string& key) {
  const auto w = words(s);
  if (w.size() != 3) bad(line, key, "expected three numbers");
  return {to_double(w[0], line, key), to_double(w[1], line, key), to_double(w[2], line, key)};
}

std::string format_class(const ClassInfo& info) {
  std::string s = info.name + " " + (info.kind == ElementKind::Structural ? "structural" : "loose");
  if (info.color) {
    for (int k = 0; k < 3; ++k) s += " " + std::to_string((*info.color)[k]);
  }
  return s;
}

ClassInfo parse_class(const std::string& value, int line, const std::string& key) {
  const auto w = words(value);
  if (w.size() != 2 && w.size() != 5) bad(line, key, "expected '<name> structural|loose [r g b]'");
  ClassInfo info;
  info.name = w[0];
  if (w[1] == "structural") {
    info.kind = ElementKind::Structural;
  } else if (w[1] == "loose") {
    info.kind = ElementKind::Loose;
  } else {
    bad(line, key, "kind must be structural or loose");
  }
  if (w.size() == 5) {
    std::array<std::uint8_t, 3> c{};
    for (int k = 0; k < 3; ++k) {
      const long long v = to_int(w[2 + k], line, key);
      if (v < 0 || v > 255) bad(line, key, "color component out of range");
      c[k] = static_cast<std::uint8_t>(v);
    }
    info.color = c;
  }
  return info;
}

}  // namespace

void PipelineConfig::check() const {
  ransac.check();
  inpaint.check();
  pack.check();
  if (hook) hook->check();
  auto unit = [](const Vec3& v, const char* name) {
    if (std::abs(v.norm() - 1.0) > 1e-6) throw Error(ErrorKind::InvalidArgument, std::string(name) + " must be unit length");
  };
  unit(up_axis, "up_axis");
  unit(forward_axis, "forward_axis");
  if (up_axis.cross(forward_axis).norm() < 1e-6) throw Error(ErrorKind::InvalidArgument, "up_axis and forward_axis are parallel");
  if (!(vertical_angle > 0.0 && vertical_angle < 90.0)) throw Error(ErrorKind::InvalidArgument, "vertical_angle must be in (0, 90)");
  if (!(removal_padding >= 0.0)) throw Error(ErrorKind::InvalidArgument, "removal padding must be >= 0");
  if (!(parallel_tol > 0.0 && parallel_tol < 90.0)) throw Error(ErrorKind::InvalidArgument, "parallel_tol must be in (0, 90)");
  if (!(snap_tolerance >= 0.0)) throw Error(ErrorKind::InvalidArgument, "snap_tolerance must be >= 0");
  if (!(weld_tolerance > 0.0)) throw Error(ErrorKind::InvalidArgument, "weld_tolerance must be positive");
  if (!(cdt.max_edge_length >= 0.0) || cdt.max_refinement_points < 0) {
    throw Error(ErrorKind::InvalidArgument, "invalid CDT refinement settings");
  }
  if (!(min_area >= 0.0)) throw Error(ErrorKind::InvalidArgument, "min_area must be >= 0");
  if (!(texel_density > 0.0)) throw Error(ErrorKind::InvalidArgument, "texel_density must be positive");
  if (max_chart_texels < 1) throw Error(ErrorKind::InvalidArgument, "max_chart_texels must be >= 1");
  if (max_concurrent_hooks < 1) throw Error(ErrorKind::InvalidArgument, "max_concurrent_hooks must be >= 1");
  classes.check_pipeline_ready();
}

bool PipelineConfig::operator==(const PipelineConfig& o) const {
  auto hook_eq = [](const std::optional<ExternalHook>& a, const std::optional<ExternalHook>& b) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    return a->command == b->command && a->timeout_seconds == b->timeout_seconds && a->working_directory == b->working_directory;
  };
  return classes == o.classes && up_axis == o.up_axis && forward_axis == o.forward_axis &&
         ransac.inlier_dist == o.ransac.inlier_dist && ransac.max_iterations == o.ransac.max_iterations &&
         ransac.min_inlier_faces == o.ransac.min_inlier_faces && ransac.normal_agreement == o.ransac.normal_agreement &&
         vertical_angle == o.vertical_angle && removal_padding == o.removal_padding && parallel_tol == o.parallel_tol &&
         snap_tolerance == o.snap_tolerance && weld_tolerance == o.weld_tolerance &&
         cdt.max_edge_length == o.cdt.max_edge_length && cdt.max_refinement_points == o.cdt.max_refinement_points &&
         min_area == o.min_area && texel_density == o.texel_density && max_chart_texels == o.max_chart_texels &&
         inpaint.patch_size == o.inpaint.patch_size && inpaint.pyramid_levels == o.inpaint.pyramid_levels &&
         inpaint.iterations_per_level == o.inpaint.iterations_per_level &&
         max_concurrent_hooks == o.max_concurrent_hooks && variance_warning == o.variance_warning &&
         hook_eq(hook, o.hook) && pack.gutter == o.pack.gutter && pack.max_atlas_side == o.pack.max_atlas_side &&
         pack.allow_multi_page == o.pack.allow_multi_page && seed == o.seed;
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig c;
  ExternalHook hook;
  bool hook_seen = false;
  std::optional<ClassMap> classes;
  std::optional<int> unknown_class;

  using Setter = std::function<void(const std::string&, int, const std::string&)>;
  auto num = [](double& field) -> Setter {
    return [&field](const std::string& v, int l, const std::string& k) { field = to_double(v, l, k); };
  };
  auto integer = [](int& field) -> Setter {
    return [&field](const std::string& v, int l, const std::string& k) {
      const long long x = to_int(v, l, k);
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) bad(l, k, "integer out of range");
      field = static_cast<int>(x);
    };
  };
  const std::map<std::string, Setter> setters = {
      {"schema_version",
       [](const std::string& v, int l, const std::string& k) {
         const long long x = to_int(v, l, k);
         if (x != kConfigSchemaVersion) {
           throw Error(ErrorKind::SchemaVersion, "config schema_version " + std::to_string(x) + " is not supported (expected " +
                                                     std::to_string(kConfigSchemaVersion) + ")");
         }
       }},
      {"seed",
       [&](const std::string& v, int l, const std::string& k) {
         std::uint64_t x = 0;
         auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
         if (ec != std::errc() || ptr != v.data() + v.size()) bad(l, k, "expected an unsigned integer");
         c.seed = x;
       }},
      {"up_axis", [&](const std::string& v, int l, const std::string& k) { c.up_axis = to_vec3(v, l, k); }},
      {"forward_axis", [&](const std::string& v, int l, const std::string& k) { c.forward_axis = to_vec3(v, l, k); }},
      {"ransac.inlier_dist", num(c.ransac.inlier_dist)},
      {"ransac.max_iterations", integer(c.ransac.max_iterations)},
      {"ransac.min_inlier_faces", integer(c.ransac.min_inlier_faces)},
      {"ransac.normal_agreement", num(c.ransac.normal_agreement)},
      {"segmentation.vertical_angle", num(c.vertical_angle)},
      {"removal.padding", num(c.removal_padding)},
      {"reconstruction.parallel_tol", num(c.parallel_tol)},
      {"reconstruction.snap_tolerance", num(c.snap_tolerance)},
      {"reconstruction.weld_tolerance", num(c.weld_tolerance)},
      {"cdt.max_edge_length", num(c.cdt.max_edge_length)},
      {"cdt.max_refinement_points", integer(c.cdt.max_refinement_points)},
      {"mesh.min_area", num(c.min_area)},
      {"uv.texel_density", num(c.texel_density)},
      {"uv.max_chart_texels", integer(c.max_chart_texels)},
      {"inpaint.patch_size", integer(c.inpaint.patch_size)},
      {"inpaint.pyramid_levels", integer(c.inpaint.pyramid_levels)},
      {"inpaint.iterations_per_level", integer(c.inpaint.iterations_per_level)},
      {"inpaint.max_concurrent_hooks", integer(c.max_concurrent_hooks)},
      {"inpaint.variance_warning", num(c.variance_warning)},
      {"hook.command",
       [&](const std::string& v, int, const std::string&) {
         hook.command = v;
         hook_seen = true;
       }},
      {"hook.timeout", num(hook.timeout_seconds)},
      {"hook.working_directory", [&](const std::string& v, int, const std::string&) { hook.working_directory = v; }},
      {"atlas.gutter", integer(c.pack.gutter)},
      {"atlas.max_atlas_side", integer(c.pack.max_atlas_side)},
      {"atlas.allow_multi_page",
       [&](const std::string& v, int l, const std::string& k) { c.pack.allow_multi_page = to_bool(v, l, k); }},
      {"class.unknown", [&](const std::string& v, int l, const std::string& k) { unknown_class = static_cast<int>(to_int(v, l, k)); }},
  };

  std::istringstream in(text);
  std::map<std::string, int> seen;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad(line_no, line, "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.emplace(key, line_no).second) bad(line_no, key, "duplicate key");
    if (key.rfind("class.", 0) == 0 && key != "class.unknown") {
      const long long id = to_int(key.substr(6), line_no, key);
      if (!classes) classes.emplace();
      classes->add(static_cast<int>(id), parse_class(value, line_no, key));
      continue;
    }
    auto it = setters.find(key);
    if (it == setters.end()) bad(line_no, key, "unknown key");
    it->second(value, line_no, key);
  }
  if (classes) c.classes = std::move(*classes);
  if (unknown_class) {
    if (!c.classes.contains(*unknown_class)) {
      throw Error(ErrorKind::UnknownClass, "class.unknown refers to undefined class " + std::to_string(*unknown_class));
    }
    c.classes.set_unknown_class(*unknown_class);
  }
  if (hook_seen && !hook.command.empty()) c.hook = hook;
  c.check();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::FileNotFound, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const PipelineConfig& c) {
  std::ostringstream out;
  out << "schema_version = " << kConfigSchemaVersion << "\n";
  out << "seed = " << c.seed << "\n";
  out << "up_axis = " << fmt(c.up_axis) << "\n";
  out << "forward_axis = " << fmt(c.forward_axis) << "\n";
  out << "ransac.inlier_dist = " << fmt(c.ransac.inlier_dist) << "\n";
  out << "ransac.max_iterations = " << c.ransac.max_iterations << "\n";
  out << "ransac.min_inlier_faces = " << c.ransac.min_inlier_faces << "\n";
  out << "ransac.normal_agreement = " << fmt(c.ransac.normal_agreement) << "\n";
  out << "segmentation.vertical_angle = " << fmt(c.vertical_angle) << "\n";
  out << "removal.padding = " << fmt(c.removal_padding) << "\n";
  out << "reconstruction.parallel_tol = " << fmt(c.parallel_tol) << "\n";
  out << "reconstruction.snap_tolerance = " << fmt(c.snap_tolerance) << "\n";
  out << "reconstruction.weld_tolerance = " << fmt(c.weld_tolerance) << "\n";
  out << "cdt.max_edge_length = " << fmt(c.cdt.max_edge_length) << "\n";
  out << "cdt.max_refinement_points = " << c.cdt.max_refinement_points << "\n";
  out << "mesh.min_area = " << fmt(c.min_area) << "\n";
  out << "uv.texel_density = " << fmt(c.texel_density) << "\n";
  out << "uv.max_chart_texels = " << c.max_chart_texels << "\n";
  out << "inpaint.patch_size = " << c.inpaint.patch_size << "\n";
  out << "inpaint.pyramid_levels = " << c.inpaint.pyramid_levels << "\n";
  out << "inpaint.iterations_per_level = " << c.inpaint.iterations_per_level << "\n";
  out << "inpaint.max_concurrent_hooks = " << c.max_concurrent_hooks << "\n";
  out << "inpaint.variance_warning = " << fmt(c.variance_warning) << "\n";
  if (c.hook) {
    out << "hook.command = " << c.hook->command << "\n";
    out << "hook.timeout = " << fmt(c.hook->timeout_seconds) << "\n";
    if (!c.hook->working_directory.empty()) out << "hook.working_directory = " << c.hook->working_directory.string() << "\n";
  }
  out << "atlas.gutter = " << c.pack.gutter << "\n";
  out << "atlas.max_atlas_side = " << c.pack.max_atlas_side << "\n";
  out << "atlas.allow_multi_page = " << (c.pack.allow_multi_page ? "true" : "false") << "\n";
  for (const auto& [id, info] : c.classes.classes()) out << "class." << id << " = " << format_class(info) << "\n";
  out << "class.unknown = " << c.classes.unknown_class() << "\n";
  return out.str();
}

}  // namespace defurnish
