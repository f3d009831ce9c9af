#include "defurnish/pipeline.hpp"

#include "defurnish/mesh_io.hpp"
#include "defurnish/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace defurnish {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kMesh = "mesh.ply";
constexpr const char* kSegments = "segments.json";
constexpr const char* kCharts = "charts.json";
constexpr const char* kChartsSvg = "charts.svg";
constexpr const char* kRasters = "rasters.json";
constexpr const char* kRasterDir = "rasters";
constexpr const char* kFinalMesh = "empty_room.obj";
constexpr const char* kLayout = "layout.json";
constexpr const char* kReport = "report.json";

json label_json(FaceLabel l) { return json::array({l.class_id, l.instance_id}); }
FaceLabel label_from(const json& j) { return {j.at(0).get<int>(), j.at(1).get<int>()}; }
json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingIntermediate, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << doc.dump(2) << "\n";
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::Io, "cannot create directory " + dir.string());
}

class Timer {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void log_line(const RunOptions& options, int level, const std::string& text) {
  if (options.log && options.verbosity >= level) *options.log << "[defurnish] " << text << "\n" << std::flush;
}

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::size_t count_loose(const LabeledMesh& mesh, const ClassMap& classes) {
  std::size_t n = 0;
  for (const FaceLabel& l : mesh.labels) n += classes.is_loose(l.class_id) ? 1 : 0;
  return n;
}

Stage previous(Stage s) {
  switch (s) {
    case Stage::Reconstruct: return Stage::Segment;
    case Stage::Unwrap: return Stage::Reconstruct;
    case Stage::Inpaint: return Stage::Unwrap;
    case Stage::Pack: return Stage::Inpaint;
    case Stage::Segment: break;
  }
  throw Error(ErrorKind::InvalidArgument, "the segment stage reads a mesh, not a dump");
}

json new_report(const PipelineConfig& config) {
  json r;
  r["schema_version"] = kDumpSchemaVersion;
  r["seed"] = config.seed;
  r["errors"] = json::array();
  r["timings"] = json::object();
  return r;
}

void write_manifest(const fs::path& dir, Stage stage, const json& report, bool failed) {
  json m;
  m["schema_version"] = kDumpSchemaVersion;
  m["stage"] = std::string(to_string(stage));
  m["failed"] = failed;
  m["report"] = report;
  write_json(dir / kManifest, m);
}

StageOutcome fail_stage(Stage stage, json report, const std::string& kind, const std::string& message,
                        const fs::path& out_dir, const RunOptions& options) {
  report["errors"].push_back({{"stage", std::string(to_string(stage))}, {"kind", kind}, {"message", message}});
  log_line(options, 0, "stage=" + std::string(to_string(stage)) + " error=" + message);
  try {
    ensure_directory(out_dir);
    write_manifest(out_dir, stage, report, true);
  } catch (const Error&) {
  }
  return {1, std::move(report)};
}

// Least-squares plane of a face set, facing the summed face normals.
PlaneSegment fit_unplaned(const LabeledMesh& mesh, FaceLabel label, const std::vector<std::uint32_t>& faces,
                          const PipelineConfig& config) {
  double area = 0.0;
  Vec3 centroid = Vec3::Zero();
  Vec3 normal_sum = Vec3::Zero();
  for (std::uint32_t f : faces) {
    const double a = mesh.area(f);
    area += a;
    centroid += a * mesh.centroid(f);
    normal_sum += a * mesh.normal(f);
  }
  if (area > 0.0) {
    centroid /= area;
  } else {
    for (std::uint32_t f : faces) centroid += mesh.centroid(f);
    centroid /= static_cast<double>(std::max<std::size_t>(faces.size(), 1));
  }
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::uint32_t f : faces) {
    const double a = std::max(mesh.area(f), 1e-300);
    for (int k = 0; k < 3; ++k) {
      const Vec3 d = mesh.corner(f, k) - centroid;
      cov += a * d * d.transpose();
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Vec3 n = eig.eigenvectors().col(0);
  if (normal_sum.norm() > 0.0 && n.dot(normal_sum) < 0.0) n = -n;
  PlaneSegment seg;
  seg.plane = canonicalize(Plane::through(centroid, n));
  seg.facing = seg.plane.normal.dot(n) >= 0.0 ? 1 : -1;
  seg.class_id = label.class_id;
  seg.instance_id = label.instance_id;
  seg.face_ids = faces;
  seg.orientation = classify_element_orientation(seg.plane, config.up_axis, config.vertical_angle);
  return seg;
}

Orientation other_branch(Orientation o) { return o == Orientation::Horizontal ? Orientation::Vertical : Orientation::Horizontal; }

ChartFrame robust_frame(const Vec3& normal, Orientation orientation, const PipelineConfig& config) {
  try {
    return orientation_frame(normal, orientation, config.up_axis, config.forward_axis);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::DegenerateFrame) throw;
    return orientation_frame(normal, other_branch(orientation), config.up_axis, config.forward_axis);
  }
}

UvChart single_face_chart(const LabeledMesh& mesh, FaceLabel label, std::uint32_t f, const ChartFrame& frame,
                          int component) {
  UvChart chart;
  chart.element = label;
  chart.component = component;
  chart.frame = frame;
  chart.face_ids = {f};
  CornerUvs c;
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  for (int k = 0; k < 3; ++k) {
    c[k] = frame.project(mesh.corner(f, k));
    lo = lo.cwiseMin(c[k]);
  }
  for (Vec2& p : c) p -= lo;
  chart.uvs = {c};
  chart.origin = lo;
  return chart;
}

struct ElementCharts {
  std::vector<UvChart> charts;
  bool fallback = false;
};

ElementCharts unwrap_one(const LabeledMesh& mesh, const PlaneSegment& seg, const PipelineConfig& config) {
  ElementCharts out;
  const ChartFrame frame = robust_frame(seg.surface_normal(), seg.orientation, config);
  try {
    out.charts = unwrap_element(mesh, seg.label(), seg.face_ids, frame);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::FoldOver) throw;
    out.fallback = true;
    std::vector<std::uint32_t> faces = seg.face_ids;
    std::sort(faces.begin(), faces.end());
    int component = 0;
    for (std::uint32_t f : faces) {
      const Vec3 n = mesh.normal(f);
      const ChartFrame face_frame = n.squaredNorm() > 0.0 ? robust_frame(n, seg.orientation, config) : frame;
      out.charts.push_back(single_face_chart(mesh, seg.label(), f, face_frame, component++));
    }
  }
  for (UvChart& c : out.charts) c.orientation = seg.orientation;
  return out;
}

void save_rasters(const fs::path& dir, const std::vector<ChartRaster>& rasters) {
  ensure_directory(dir / kRasterDir);
  for (std::size_t i = 0; i < rasters.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "chart_%05zu", i);
    write_png(rasters[i].color, dir / kRasterDir / (std::string(name) + "_color.png"));
    TextureImage cov(rasters[i].width(), rasters[i].height(), 1, 0);
    for (std::size_t k = 0; k < rasters[i].coverage.size(); ++k) {
      cov.pixels[k] = rasters[i].coverage[k] == Coverage::Fill ? 255 : rasters[i].coverage[k] == Coverage::Reference ? 128 : 0;
    }
    write_png(cov, dir / kRasterDir / (std::string(name) + "_coverage.png"));
  }
}

std::vector<ChartRaster> load_rasters(const fs::path& dir, const json& index) {
  std::vector<ChartRaster> rasters;
  const json& list = index.at("charts");
  for (std::size_t i = 0; i < list.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "chart_%05zu", i);
    ChartRaster r;
    r.element = label_from(list[i].at("element"));
    r.component = list[i].at("component").get<int>();
    r.seed = list[i].at("seed").get<std::uint64_t>();
    const fs::path color_path = dir / kRasterDir / (std::string(name) + "_color.png");
    const fs::path cov_path = dir / kRasterDir / (std::string(name) + "_coverage.png");
    if (!fs::exists(color_path) || !fs::exists(cov_path)) {
      throw Error(ErrorKind::MissingIntermediate, "missing raster " + color_path.string());
    }
    r.color = read_image(color_path);
    if (r.color.channels != 3) {
      TextureImage rgb(r.color.width, r.color.height, 3, 0);
      for (int y = 0; y < r.color.height; ++y) {
        for (int x = 0; x < r.color.width; ++x) rgb.set_rgb(x, y, r.color.rgb(x, y));
      }
      r.color = std::move(rgb);
    }
    const TextureImage cov = read_image(cov_path);
    if (cov.width != r.color.width || cov.height != r.color.height) {
      throw Error(ErrorKind::SizeMismatch, "coverage and color rasters differ for " + std::string(name));
    }
    r.coverage.resize(static_cast<std::size_t>(cov.width) * cov.height);
    for (int y = 0; y < cov.height; ++y) {
      for (int x = 0; x < cov.width; ++x) {
        const std::uint8_t v = cov.texel(x, y)[0];
        r.coverage[static_cast<std::size_t>(y) * cov.width + x] =
            v >= 192 ? Coverage::Fill : v >= 64 ? Coverage::Reference : Coverage::Outside;
      }
    }
    rasters.push_back(std::move(r));
  }
  return rasters;
}

LabeledMesh load_dump_mesh(const fs::path& dir, const PipelineConfig& config) {
  if (!fs::exists(dir / kMesh)) throw Error(ErrorKind::MissingIntermediate, "missing " + (dir / kMesh).string());
  return load_mesh(dir / kMesh, std::nullopt, config.classes);
}

json distortion_summary(const LabeledMesh& mesh, const UnwrapResult& u) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  double weighted = 0.0;
  double area = 0.0;
  for (std::size_t c = 0; c < u.charts.size(); ++c) {
    const DistortionStats& d = u.distortion[c];
    if (d.stretch.empty()) continue;
    lo = std::min(lo, d.min);
    hi = std::max(hi, d.max);
    double a = 0.0;
    for (std::uint32_t f : u.charts[c].face_ids) a += mesh.area(f);
    weighted += d.mean * a;
    area += a;
  }
  json j;
  j["min_stretch"] = std::isfinite(lo) ? json(lo) : json(nullptr);
  j["max_stretch"] = area > 0.0 ? json(hi) : json(nullptr);
  j["mean_stretch"] = area > 0.0 ? json(weighted / area) : json(nullptr);
  j["failures"] = u.distortion_failures;
  return j;
}

// --- stages ---------------------------------------------------------------

json reconstruct_stage(const fs::path& in, const PipelineConfig& config, const fs::path& out, const RunOptions& options,
                       json report) {
  const LabeledMesh mesh = load_dump_mesh(in, config);
  const std::vector<PlaneSegment> segments = segments_from_json(read_json(in / kSegments));
  const std::vector<ObjectBox> boxes = object_bounding_boxes(mesh, config.classes, config.removal_padding);
  const RemovalPlan plan = plan_removal_order(boxes);
  ReconstructionOptions ro;
  ro.up_axis = config.up_axis;
  ro.forward_axis = config.forward_axis;
  ro.parallel_tol = config.parallel_tol;
  ro.snap_tolerance = config.snap_tolerance;
  ro.weld_tolerance = config.weld_tolerance;
  ro.cdt = config.cdt;
  ro.jobs = options.jobs;
  const ReconstructionResult result = reconstruct_scene(mesh, segments, plan, config.classes, ro);
  save_mesh(result.mesh, out / kMesh);
  write_json(out / kSegments, segments_to_json(result.segments));

  const ReconstructionReport& r = result.report;
  json j;
  j["objects"] = boxes.size();
  j["removal_groups"] = json::array();
  for (const RemovalGroup& g : plan.groups) {
    json members = json::array();
    for (const ObjectBox& b : g.boxes) members.push_back(label_json(b.label));
    j["removal_groups"].push_back({{"objects", members}, {"volume", g.volume}});
  }
  j["removed_faces"] = r.removed_faces;
  std::size_t filled = 0;
  json per_element = json::array();
  for (const auto& [label, n] : r.filled_faces) {
    filled += n;
    per_element.push_back({{"element", label_json(label)}, {"faces", n}});
  }
  j["filled_faces"] = filled;
  j["filled_by_element"] = per_element;
  j["filled_regions"] = r.filled_regions;
  j["open_holes"] = r.open_holes;
  j["unplaned_with_holes"] = json::array();
  for (const FaceLabel& l : r.unplaned_with_holes) j["unplaned_with_holes"].push_back(label_json(l));
  j["failures"] = json::array();
  for (const ElementFailure& f : r.failures) {
    j["failures"].push_back({{"element", label_json(f.element)}, {"kind", std::string(to_string(f.kind))}, {"message", f.message}});
  }
  j["faces"] = result.mesh.face_count();
  j["vertices"] = result.mesh.vertices.size();
  j["loose_faces"] = count_loose(result.mesh, config.classes);
  report["reconstruction"] = j;
  log_line(options, 1, "stage=reconstruct objects=" + std::to_string(boxes.size()) + " groups=" +
                           std::to_string(plan.groups.size()) + " removed=" + std::to_string(r.removed_faces) +
                           " filled=" + std::to_string(filled) + " open_holes=" + std::to_string(r.open_holes) +
                           " failures=" + std::to_string(r.failures.size()));
  return report;
}

json unwrap_stage(const fs::path& in, const PipelineConfig& config, const fs::path& out, const RunOptions& options,
                  json report) {
  const LabeledMesh mesh = load_dump_mesh(in, config);
  const std::vector<PlaneSegment> segments = segments_from_json(read_json(in / kSegments));
  const UnwrapResult u = unwrap_scene(mesh, segments, config, options.jobs);
  save_mesh(mesh, out / kMesh);
  write_json(out / kCharts, charts_to_json(u.charts));
  write_text(out / kChartsSvg, charts_svg(u.charts));

  json j;
  j["charts"] = u.charts.size();
  std::size_t downscaled = 0;
  for (const UvChart& c : u.charts) downscaled += c.downscaled ? 1 : 0;
  j["downscaled_charts"] = downscaled;
  j["fallback_elements"] = json::array();
  for (const FaceLabel& l : u.fallback_elements) j["fallback_elements"].push_back(label_json(l));
  j["unplaned_elements"] = json::array();
  for (const FaceLabel& l : u.unplaned_elements) j["unplaned_elements"].push_back(label_json(l));
  j["distortion"] = distortion_summary(mesh, u);
  j["adjacency_ratio"] = u.adjacency_ratio;
  report["unwrap"] = j;
  log_line(options, 1, "stage=unwrap charts=" + std::to_string(u.charts.size()) + " adjacency=" + fixed(u.adjacency_ratio, 6) +
                           " fallback=" + std::to_string(u.fallback_elements.size()));
  return report;
}

json inpaint_stage(const fs::path& in, const PipelineConfig& config, const fs::path& out, const RunOptions& options,
                   json report) {
  const LabeledMesh mesh = load_dump_mesh(in, config);
  const std::vector<UvChart> charts = charts_from_json(read_json(in / kCharts));
  std::vector<ChartRaster> rasters(charts.size());
  std::vector<std::optional<ChartFailure>> raster_failures(charts.size());
  parallel_for(charts.size(), options.jobs, [&](std::size_t i) {
    try {
      rasters[i] = rasterize_chart(mesh, charts[i], Sampling::Bilinear);
    } catch (const Error& e) {
      const auto size = charts[i].texel_size();
      rasters[i] = make_raster(size[0], size[1]);
      rasters[i].element = charts[i].element;
      rasters[i].component = charts[i].component;
      raster_failures[i] = ChartFailure{i, charts[i].element, e.kind(), e.what()};
    }
  });
  InpaintRunOptions run;
  run.jobs = options.jobs;
  run.max_concurrent_hooks = config.max_concurrent_hooks;
  run.variance_warning = config.variance_warning;
  const InpaintOutcome outcome = inpaint_all(std::move(rasters), config.inpaint, config.hook, config.seed, run);

  save_mesh(mesh, out / kMesh);
  write_json(out / kCharts, charts_to_json(charts));
  save_rasters(out, outcome.rasters);
  json index;
  index["charts"] = json::array();
  std::size_t fill = 0;
  std::size_t reference = 0;
  for (const ChartRaster& r : outcome.rasters) {
    fill += r.count(Coverage::Fill);
    reference += r.count(Coverage::Reference);
    index["charts"].push_back({{"element", label_json(r.element)},
                               {"component", r.component},
                               {"seed", r.seed},
                               {"width", r.width()},
                               {"height", r.height()},
                               {"fill_texels", r.count(Coverage::Fill)},
                               {"reference_texels", r.count(Coverage::Reference)}});
  }
  write_json(out / kRasters, index);

  json j;
  j["charts"] = outcome.rasters.size();
  j["fill_texels"] = fill;
  j["reference_texels"] = reference;
  j["method"] = config.hook ? "external" : "exemplar";
  j["failures"] = json::array();
  auto add_failure = [&](const ChartFailure& f, const char* phase) {
    j["failures"].push_back({{"chart", f.index},
                             {"element", label_json(f.element)},
                             {"phase", phase},
                             {"kind", std::string(to_string(f.kind))},
                             {"message", f.message}});
  };
  for (const auto& f : raster_failures) {
    if (f) add_failure(*f, "rasterize");
  }
  for (const ChartFailure& f : outcome.failures) add_failure(f, "inpaint");
  j["warnings"] = outcome.warnings;
  report["inpaint"] = j;
  log_line(options, 1, "stage=inpaint charts=" + std::to_string(outcome.rasters.size()) + " fill_texels=" +
                           std::to_string(fill) + " failures=" + std::to_string(j["failures"].size()));
  for (const std::string& w : outcome.warnings) log_line(options, 2, "warning " + w);
  return report;
}

json pack_stage(const fs::path& in, const PipelineConfig& config, const fs::path& out, const RunOptions& options,
                json report) {
  const LabeledMesh mesh = load_dump_mesh(in, config);
  const std::vector<UvChart> charts = charts_from_json(read_json(in / kCharts));
  const std::vector<ChartRaster> rasters = load_rasters(in, read_json(in / kRasters));
  if (rasters.size() != charts.size()) throw Error(ErrorKind::InconsistentInput, "raster and chart counts differ");
  const AtlasLayout layout = pack_charts(charts, config.pack);
  ComposedAtlas composed = compose_atlas(layout, rasters, options.jobs);
  std::vector<std::shared_ptr<const TextureImage>> pages;
  for (TextureImage& p : composed.pages) pages.push_back(std::make_shared<const TextureImage>(std::move(p)));
  const LabeledMesh final_mesh = reproject(mesh, charts, layout, pages);
  save_mesh(final_mesh, out / kFinalMesh);
  write_json(out / kLayout, layout_to_json(layout, charts));

  json j;
  j["pages"] = json::array();
  for (const AtlasPage& p : layout.pages) j["pages"].push_back({{"width", p.width}, {"height", p.height}});
  j["gutter"] = layout.gutter;
  j["occupancy"] = charts.empty() ? json(nullptr) : json(occupancy(layout));
  report["pack"] = j;

  const ValidationReport v = validate(final_mesh, config.min_area);
  std::size_t fresh = 0;
  for (std::uint8_t n : final_mesh.face_is_new) fresh += n ? 1 : 0;
  json o;
  o["mesh"] = kFinalMesh;
  o["faces"] = final_mesh.face_count();
  o["vertices"] = final_mesh.vertices.size();
  o["new_faces"] = fresh;
  o["loose_faces"] = count_loose(final_mesh, config.classes);
  o["degenerate_faces"] = v.degenerate_faces.size();
  o["non_manifold_edges"] = v.non_manifold_edges.size();
  report["output"] = o;
  log_line(options, 1, "stage=pack pages=" + std::to_string(layout.pages.size()) +
                           (charts.empty() ? std::string() : " occupancy=" + fixed(occupancy(layout), 4)));
  return report;
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Segment: return "segment";
    case Stage::Reconstruct: return "reconstruct";
    case Stage::Unwrap: return "unwrap";
    case Stage::Inpaint: return "inpaint";
    case Stage::Pack: return "pack";
  }
  return "?";
}

Stage stage_from_string(std::string_view name) {
  for (Stage s : {Stage::Segment, Stage::Reconstruct, Stage::Unwrap, Stage::Inpaint, Stage::Pack}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown stage '" + std::string(name) + "'");
}

UnwrapResult unwrap_scene(const LabeledMesh& mesh, const std::vector<PlaneSegment>& segments,
                          const PipelineConfig& config, int jobs) {
  std::map<FaceLabel, PlaneSegment> elements;
  std::vector<std::uint8_t> covered(mesh.face_count(), 0);
  for (const PlaneSegment& s : segments) {
    auto [it, inserted] = elements.emplace(s.label(), s);
    if (!inserted) it->second.face_ids.insert(it->second.face_ids.end(), s.face_ids.begin(), s.face_ids.end());
    for (std::uint32_t f : s.face_ids) {
      if (f >= mesh.face_count()) throw Error(ErrorKind::InconsistentInput, "segment face id out of range");
      covered[f] = 1;
    }
  }
  std::map<FaceLabel, std::vector<std::uint32_t>> leftovers;
  for (std::uint32_t f = 0; f < mesh.face_count(); ++f) {
    if (!covered[f]) leftovers[mesh.labels[f]].push_back(f);
  }
  UnwrapResult result;
  for (auto& [label, faces] : leftovers) {
    auto it = elements.find(label);
    if (it != elements.end()) {
      it->second.face_ids.insert(it->second.face_ids.end(), faces.begin(), faces.end());
    } else {
      elements.emplace(label, fit_unplaned(mesh, label, faces, config));
      result.unplaned_elements.push_back(label);
    }
  }
  std::vector<const PlaneSegment*> order;
  for (auto& [label, seg] : elements) {
    std::sort(seg.face_ids.begin(), seg.face_ids.end());
    order.push_back(&seg);
  }
  std::vector<ElementCharts> per_element(order.size());
  parallel_for(order.size(), jobs, [&](std::size_t i) { per_element[i] = unwrap_one(mesh, *order[i], config); });
  std::vector<UvChart> charts;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (per_element[i].fallback) result.fallback_elements.push_back(order[i]->label());
    for (UvChart& c : per_element[i].charts) charts.push_back(std::move(c));
  }
  result.charts = assign_texel_density(std::move(charts), config.texel_density, config.max_chart_texels);
  result.distortion.resize(result.charts.size());
  std::vector<std::uint8_t> failed(result.charts.size(), 0);
  parallel_for(result.charts.size(), jobs, [&](std::size_t i) {
    try {
      result.distortion[i] = compute_distortion(mesh, result.charts[i]);
    } catch (const Error&) {
      failed[i] = 1;
    }
  });
  for (std::uint8_t f : failed) result.distortion_failures += f;
  result.adjacency_ratio = adjacency_preservation(mesh, result.charts);
  return result;
}

nlohmann::json strip_timings(nlohmann::json report) {
  report.erase("timings");
  return report;
}

json segments_to_json(const std::vector<PlaneSegment>& segments) {
  json list = json::array();
  for (const PlaneSegment& s : segments) {
    list.push_back({{"element", label_json(s.label())},
                    {"normal", vec_json(s.plane.normal)},
                    {"offset", s.plane.offset},
                    {"orientation", std::string(to_string(s.orientation))},
                    {"facing", s.facing},
                    {"faces", s.face_ids}});
  }
  return {{"segments", list}};
}

std::vector<PlaneSegment> segments_from_json(const json& doc) {
  std::vector<PlaneSegment> out;
  try {
    for (const json& j : doc.at("segments")) {
      PlaneSegment s;
      const FaceLabel l = label_from(j.at("element"));
      s.class_id = l.class_id;
      s.instance_id = l.instance_id;
      s.plane.normal = vec3_from(j.at("normal"));
      s.plane.offset = j.at("offset").get<double>();
      s.orientation = orientation_from_string(j.at("orientation").get<std::string>());
      s.facing = j.at("facing").get<int>();
      s.face_ids = j.at("faces").get<std::vector<std::uint32_t>>();
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("segments dump: ") + e.what());
  }
  return out;
}

json charts_to_json(const std::vector<UvChart>& charts) {
  json list = json::array();
  for (const UvChart& c : charts) {
    std::vector<double> uvs;
    uvs.reserve(c.uvs.size() * 6);
    for (const CornerUvs& t : c.uvs) {
      for (const Vec2& p : t) {
        uvs.push_back(p.x());
        uvs.push_back(p.y());
      }
    }
    list.push_back({{"element", label_json(c.element)},
                    {"component", c.component},
                    {"orientation", std::string(to_string(c.orientation))},
                    {"frame", {{"u", vec_json(c.frame.u)}, {"v", vec_json(c.frame.v)}, {"normal", vec_json(c.frame.normal)}}},
                    {"origin", json::array({c.origin.x(), c.origin.y()})},
                    {"texel_density", c.texel_density},
                    {"requested_density", c.requested_density},
                    {"downscaled", c.downscaled},
                    {"faces", c.face_ids},
                    {"uvs", uvs}});
  }
  return {{"charts", list}};
}

std::vector<UvChart> charts_from_json(const json& doc) {
  std::vector<UvChart> out;
  try {
    for (const json& j : doc.at("charts")) {
      UvChart c;
      c.element = label_from(j.at("element"));
      c.component = j.at("component").get<int>();
      c.orientation = orientation_from_string(j.at("orientation").get<std::string>());
      c.frame.u = vec3_from(j.at("frame").at("u"));
      c.frame.v = vec3_from(j.at("frame").at("v"));
      c.frame.normal = vec3_from(j.at("frame").at("normal"));
      c.origin = Vec2(j.at("origin").at(0).get<double>(), j.at("origin").at(1).get<double>());
      c.texel_density = j.at("texel_density").get<double>();
      c.requested_density = j.at("requested_density").get<double>();
      c.downscaled = j.at("downscaled").get<bool>();
      c.face_ids = j.at("faces").get<std::vector<std::uint32_t>>();
      const auto uvs = j.at("uvs").get<std::vector<double>>();
      if (uvs.size() != c.face_ids.size() * 6) throw Error(ErrorKind::Parse, "chart uv count does not match its faces");
      for (std::size_t k = 0; k < c.face_ids.size(); ++k) {
        c.uvs.push_back({Vec2(uvs[6 * k], uvs[6 * k + 1]), Vec2(uvs[6 * k + 2], uvs[6 * k + 3]),
                         Vec2(uvs[6 * k + 4], uvs[6 * k + 5])});
      }
      out.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("charts dump: ") + e.what());
  }
  return out;
}

json layout_to_json(const AtlasLayout& layout, const std::vector<UvChart>& charts) {
  json j;
  j["gutter"] = layout.gutter;
  j["pages"] = json::array();
  for (const AtlasPage& p : layout.pages) j["pages"].push_back({{"width", p.width}, {"height", p.height}});
  j["charts"] = json::array();
  for (std::size_t i = 0; i < layout.placements.size(); ++i) {
    const Placement& p = layout.placements[i];
    json c = {{"page", p.page}, {"offset", json::array({p.x, p.y})}, {"size", json::array({p.width, p.height})}};
    if (i < charts.size()) {
      c["element"] = label_json(charts[i].element);
      c["component"] = charts[i].component;
    }
    j["charts"].push_back(c);
  }
  return j;
}

std::string charts_svg(const std::vector<UvChart>& charts) {
  constexpr double kRowWidth = 4096.0;
  constexpr double kMargin = 8.0;
  std::ostringstream body;
  body.precision(6);
  double x = 0.0;
  double y = 0.0;
  double row_height = 0.0;
  double width = 0.0;
  for (const UvChart& c : charts) {
    const Vec2 ext = c.extent();
    if (x > 0.0 && x + ext.x() > kRowWidth) {
      x = 0.0;
      y += row_height + kMargin;
      row_height = 0.0;
    }
    body << "<g><title>" << c.element.class_id << "," << c.element.instance_id << "#" << c.component << "</title>";
    body << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << ext.x() << "\" height=\"" << ext.y()
         << "\" fill=\"none\" stroke=\"#c33\"/><path d=\"";
    for (const CornerUvs& t : c.uvs) {
      for (int k = 0; k < 3; ++k) body << (k == 0 ? "M" : "L") << x + t[k].x() << " " << y + ext.y() - t[k].y() << " ";
      body << "Z ";
    }
    body << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"0.5\"/></g>\n";
    x += ext.x() + kMargin;
    width = std::max(width, x);
    row_height = std::max(row_height, ext.y());
  }
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << std::max(width, 1.0) << " "
      << std::max(y + row_height, 1.0) << "\">\n"
      << body.str() << "</svg>\n";
  return out.str();
}

json read_manifest(const fs::path& dir, Stage expected) {
  const fs::path path = dir / kManifest;
  if (!fs::exists(path)) {
    throw Error(ErrorKind::MissingIntermediate, "no " + std::string(to_string(expected)) + " dump in " + dir.string());
  }
  const json m = read_json(path);
  const int version = m.value("schema_version", -1);
  if (version != kDumpSchemaVersion) {
    throw Error(ErrorKind::SchemaVersion, path.string() + ": dump schema version " + std::to_string(version) +
                                              " is incompatible with version " + std::to_string(kDumpSchemaVersion));
  }
  const std::string stage = m.value("stage", "");
  if (stage != to_string(expected)) {
    throw Error(ErrorKind::MissingIntermediate,
                dir.string() + " holds a '" + stage + "' dump, expected '" + std::string(to_string(expected)) + "'");
  }
  if (m.value("failed", false)) {
    throw Error(ErrorKind::MissingIntermediate, "the " + stage + " stage in " + dir.string() + " did not complete");
  }
  return m;
}

StageOutcome run_segment_stage(const fs::path& mesh_path, const std::optional<fs::path>& labels_path,
                               const PipelineConfig& config, const fs::path& out_dir, const RunOptions& options) {
  json report = new_report(config);
  const Timer timer;
  try {
    config.check();
    LabeledMesh mesh = load_mesh(mesh_path, labels_path, config.classes);
    const ValidationReport v = validate(mesh, config.min_area);
    SegmentationOptions so;
    so.ransac = config.ransac;
    so.up_axis = config.up_axis;
    so.vertical_angle = config.vertical_angle;
    so.jobs = options.jobs;
    const SegmentationResult seg = segment_structural_planes(mesh, config.classes, so, config.seed);
    const LabeledMesh labeled = apply_segmentation(mesh, seg);
    ensure_directory(out_dir);
    save_mesh(labeled, out_dir / kMesh);
    write_json(out_dir / kSegments, segments_to_json(seg.segments));

    json in;
    in["faces"] = mesh.face_count();
    in["vertices"] = mesh.vertices.size();
    in["loose_faces"] = count_loose(mesh, config.classes);
    in["textured"] = mesh.has_uvs() && !mesh.textures.empty();
    in["degenerate_faces"] = v.degenerate_faces.size();
    in["non_manifold_edges"] = v.non_manifold_edges.size();
    report["input"] = in;
    json s;
    s["segments"] = json::array();
    for (const PlaneSegment& p : seg.segments) {
      s["segments"].push_back({{"element", label_json(p.label())},
                               {"orientation", std::string(to_string(p.orientation))},
                               {"faces", p.face_ids.size()},
                               {"normal", vec_json(p.plane.normal)},
                               {"offset", p.plane.offset}});
    }
    s["unplaned_faces"] = seg.unplaned_faces.size();
    s["unplaned_labels"] = json::array();
    for (const FaceLabel& l : seg.unplaned_labels) s["unplaned_labels"].push_back(label_json(l));
    s["warnings"] = seg.warnings;
    report["segmentation"] = s;
    report["timings"]["segment"] = timer.seconds();
    write_manifest(out_dir, Stage::Segment, report, false);
    log_line(options, 1, "stage=segment elapsed=" + fixed(timer.seconds()) + "s faces=" + std::to_string(mesh.face_count()) +
                             " segments=" + std::to_string(seg.segments.size()) +
                             " unplaned_faces=" + std::to_string(seg.unplaned_faces.size()));
  } catch (const Error& e) {
    report["timings"]["segment"] = timer.seconds();
    return fail_stage(Stage::Segment, std::move(report), std::string(to_string(e.kind())), e.what(), out_dir, options);
  } catch (const std::exception& e) {
    report["timings"]["segment"] = timer.seconds();
    return fail_stage(Stage::Segment, std::move(report), "Internal", e.what(), out_dir, options);
  }
  return {0, std::move(report)};
}

StageOutcome run_stage(Stage stage, const fs::path& input_dir, const PipelineConfig& config, const fs::path& out_dir,
                       const RunOptions& options) {
  const Timer timer;
  const std::string name(to_string(stage));
  json report = new_report(config);
  try {
    config.check();
    const json manifest = read_manifest(input_dir, previous(stage));
    report = manifest.at("report");
    ensure_directory(out_dir);
    switch (stage) {
      case Stage::Reconstruct: report = reconstruct_stage(input_dir, config, out_dir, options, std::move(report)); break;
      case Stage::Unwrap: report = unwrap_stage(input_dir, config, out_dir, options, std::move(report)); break;
      case Stage::Inpaint: report = inpaint_stage(input_dir, config, out_dir, options, std::move(report)); break;
      case Stage::Pack: report = pack_stage(input_dir, config, out_dir, options, std::move(report)); break;
      case Stage::Segment: throw Error(ErrorKind::InvalidArgument, "use run_segment_stage for the segment stage");
    }
    report["timings"][name] = timer.seconds();
    write_manifest(out_dir, stage, report, false);
    if (stage == Stage::Pack) write_json(out_dir / kReport, report);
    log_line(options, 2, "stage=" + name + " elapsed=" + fixed(timer.seconds()) + "s");
  } catch (const Error& e) {
    report["timings"][name] = timer.seconds();
    return fail_stage(stage, std::move(report), std::string(to_string(e.kind())), e.what(), out_dir, options);
  } catch (const std::exception& e) {
    report["timings"][name] = timer.seconds();
    return fail_stage(stage, std::move(report), "Internal", e.what(), out_dir, options);
  }
  return {0, std::move(report)};
}

StageOutcome run_pipeline(const fs::path& mesh_path, const std::optional<fs::path>& labels_path,
                          const PipelineConfig& config, const fs::path& out_dir, const RunOptions& options) {
  StageOutcome outcome = run_segment_stage(mesh_path, labels_path, config, out_dir / "segment", options);
  Stage last = Stage::Segment;
  for (Stage s : {Stage::Reconstruct, Stage::Unwrap, Stage::Inpaint, Stage::Pack}) {
    if (outcome.exit_code != 0) break;
    outcome = run_stage(s, out_dir / std::string(to_string(last)), config, out_dir / std::string(to_string(s)), options);
    last = s;
  }
  try {
    ensure_directory(out_dir);
    write_json(out_dir / kReport, outcome.report);
  } catch (const Error& e) {
    log_line(options, 0, std::string("cannot write report: ") + e.what());
    outcome.exit_code = 1;
  }
  return outcome;
}

}  // namespace defurnish
