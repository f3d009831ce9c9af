#include "defurnish/evaluation.hpp"

#include "defurnish/error.hpp"
#include "defurnish/mesh_io.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <fstream>
#include <numeric>
#include <set>

namespace defurnish {

namespace fs = std::filesystem;
using nlohmann::json;

GeometricError geometric_error(const LabeledMesh& result, const GroundTruth& truth) {
  GeometricError out;
  std::map<FaceLabel, std::set<std::uint32_t>> vertices;
  for (std::size_t f = 0; f < result.face_count(); ++f) {
    if (result.face_is_new.empty() || !result.face_is_new[f]) continue;
    for (std::uint32_t v : result.triangles[f]) vertices[result.labels[f]].insert(v);
  }
  double sum_sq = 0.0;
  for (const auto& [label, ids] : vertices) {
    const TruthElement* e = truth.find(label);
    if (!e) {
      throw Error(ErrorKind::CorrespondenceFailure, "element (" + std::to_string(label.class_id) + "," +
                                                        std::to_string(label.instance_id) + ") has no ground truth");
    }
    ElementResidual r;
    double sq = 0.0;
    for (std::uint32_t v : ids) {
      const double d = e->plane.signed_distance(result.vertices[v]);
      sq += d * d;
      r.max_abs = std::max(r.max_abs, std::abs(d));
    }
    r.vertices = ids.size();
    r.rmse = std::sqrt(sq / static_cast<double>(ids.size()));
    sum_sq += sq;
    out.vertices += ids.size();
    out.max_abs = std::max(out.max_abs, r.max_abs);
    out.per_element[label] = r;
  }
  out.rmse = out.vertices ? std::sqrt(sum_sq / static_cast<double>(out.vertices)) : 0.0;
  out.hole_loops = count_boundary_loops(result);
  return out;
}

std::size_t count_boundary_loops(const LabeledMesh& mesh) {
  const FaceAdjacency adjacency = build_adjacency(mesh);
  std::map<std::uint32_t, std::uint32_t> parent;
  std::function<std::uint32_t(std::uint32_t)> find = [&](std::uint32_t v) {
    auto it = parent.find(v);
    if (it->second == v) return v;
    const std::uint32_t r = find(it->second);
    parent[v] = r;
    return r;
  };
  for (const EdgeFaces& ef : adjacency.entries()) {
    if (ef.faces.size() != 1) continue;
    parent.emplace(ef.edge.a, ef.edge.a);
    parent.emplace(ef.edge.b, ef.edge.b);
    const std::uint32_t a = find(ef.edge.a);
    const std::uint32_t b = find(ef.edge.b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::size_t roots = 0;
  for (const auto& [v, p] : parent) roots += find(v) == v ? 1 : 0;
  return roots;
}

TextureError texture_error(const LabeledMesh& result, const GroundTruth& truth, int samples_per_face,
                           std::uint64_t seed, const std::vector<std::vector<std::uint8_t>>* covered) {
  if (samples_per_face < 1) throw Error(ErrorKind::InvalidArgument, "samples_per_face must be >= 1");
  TextureError out;
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t f = 0; f < result.face_count(); ++f) {
    if (result.face_is_new.empty() || !result.face_is_new[f]) continue;
    const TruthElement* e = truth.find(result.labels[f]);
    if (!e) {
      throw Error(ErrorKind::CorrespondenceFailure, "element (" + std::to_string(result.labels[f].class_id) + "," +
                                                        std::to_string(result.labels[f].instance_id) + ") has no ground truth");
    }
    const TextureImage* tex = result.texture_for_face(f);
    if (!result.face_has_uv(f) || !tex) {
      out.excluded += static_cast<std::size_t>(samples_per_face);
      continue;
    }
    const std::size_t page = result.face_texture.empty() ? 0 : result.face_texture[f];
    for (int s = 0; s < samples_per_face; ++s) {
      Rng rng(derive_seed(seed, static_cast<std::int64_t>(f), s));
      const double r1 = std::sqrt(rng.uniform());
      const double r2 = rng.uniform();
      const double b0 = 1.0 - r1;
      const double b1 = r1 * (1.0 - r2);
      const double b2 = r1 * r2;
      const Vec3 p = b0 * result.corner(f, 0) + b1 * result.corner(f, 1) + b2 * result.corner(f, 2);
      const CornerUvs& t = result.corner_uvs[f];
      const Vec2 uv = b0 * t[0] + b1 * t[1] + b2 * t[2];
      if (covered && page < covered->size()) {
        const int x = std::clamp(static_cast<int>(std::floor(uv.x() * tex->width)), 0, tex->width - 1);
        const int y = std::clamp(static_cast<int>(std::floor((1.0 - uv.y()) * tex->height)), 0, tex->height - 1);
        if (!(*covered)[page][static_cast<std::size_t>(y) * tex->width + x]) {
          ++out.excluded;
          continue;
        }
      }
      const auto got = sample(*tex, uv, Sampling::Bilinear);
      const auto want = e->color_at(p, truth.rotation);
      for (int k = 0; k < 3; ++k) {
        const double d = got[k] - want[k];
        abs_sum += std::abs(d);
        sq_sum += d * d;
      }
      ++out.samples;
    }
  }
  if (out.samples > 0) {
    const double n = 3.0 * static_cast<double>(out.samples);
    out.mae = abs_sum / n;
    const double mse = sq_sum / n;
    if (mse > 0.0) out.psnr_db = 10.0 * std::log10(255.0 * 255.0 / mse);
  }
  return out;
}

json metrics_report(const GeometricError& geometry, const std::optional<TextureError>& texture,
                    const std::optional<json>& pipeline_report) {
  json m;
  m["geometric_rmse"] = geometry.rmse;
  m["geometric_max_abs"] = geometry.max_abs;
  m["new_vertices"] = geometry.vertices;
  m["hole_count"] = geometry.hole_loops;
  json per = json::array();
  for (const auto& [label, r] : geometry.per_element) {
    per.push_back({{"element", json::array({label.class_id, label.instance_id})},
                   {"rmse", r.rmse},
                   {"max_abs", r.max_abs},
                   {"vertices", r.vertices}});
  }
  m["per_element"] = per;
  if (texture) {
    m["fill_mae"] = texture->mae;
    m["fill_mae_normalized"] = texture->mae / 255.0;
    m["fill_psnr_db"] = texture->psnr_db ? json(*texture->psnr_db) : json("exact");
    m["texture_samples"] = texture->samples;
    m["texture_samples_excluded"] = texture->excluded;
  }
  m["adjacency_ratio"] = nullptr;
  m["max_stretch"] = nullptr;
  m["occupancy"] = nullptr;
  m["runtimes"] = json::object();
  if (pipeline_report) {
    const json& r = *pipeline_report;
    if (r.contains("unwrap")) {
      m["adjacency_ratio"] = r["unwrap"].value("adjacency_ratio", json(nullptr));
      if (r["unwrap"].contains("distortion")) m["max_stretch"] = r["unwrap"]["distortion"].value("max_stretch", json(nullptr));
    }
    if (r.contains("pack")) m["occupancy"] = r["pack"].value("occupancy", json(nullptr));
    if (r.contains("timings")) m["runtimes"] = r["timings"];
    if (r.contains("reconstruction")) m["open_holes_reported"] = r["reconstruction"].value("open_holes", json(nullptr));
  }
  return m;
}

json texture_spec_to_json(const TextureSpec& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"color_a", s.color_a},
          {"color_b", s.color_b},
          {"period", s.period},
          {"angle", s.angle},
          {"size", s.size},
          {"seed", s.seed}};
}

TextureSpec texture_spec_from_json(const json& j) {
  TextureSpec s;
  s.kind = texture_kind_from_string(j.at("kind").get<std::string>());
  s.color_a = j.at("color_a").get<std::array<std::uint8_t, 3>>();
  s.color_b = j.at("color_b").get<std::array<std::uint8_t, 3>>();
  s.period = j.at("period").get<double>();
  s.angle = j.at("angle").get<double>();
  s.size = j.at("size").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

void save_fixture(const SynthRoom& room, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw Error(ErrorKind::Io, "cannot create " + dir.string());
  save_mesh(room.furnished, dir / "furnished.obj");
  save_mesh(room.truth.empty_room, dir / "truth_empty.ply");
  json t;
  t["empty_room"] = "truth_empty.ply";
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(room.truth.rotation(r, c));
  }
  t["rotation"] = rot;
  t["elements"] = json::array();
  for (const TruthElement& e : room.truth.elements) {
    t["elements"].push_back({{"element", json::array({e.label.class_id, e.label.instance_id})},
                             {"name", e.name},
                             {"normal", vec_json(e.plane.normal)},
                             {"offset", e.plane.offset},
                             {"inward", vec_json(e.inward)},
                             {"origin", vec_json(e.origin)},
                             {"axis_s", vec_json(e.axis_s)},
                             {"axis_t", vec_json(e.axis_t)},
                             {"texture", texture_spec_to_json(e.texture)}});
  }
  std::ofstream out(dir / "truth.json", std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write truth.json");
  out << t.dump(2) << "\n";
}

GroundTruth load_truth(const fs::path& truth_json, const ClassMap& class_map) {
  std::ifstream in(truth_json, std::ios::binary);
  if (!in) throw Error(ErrorKind::FileNotFound, truth_json.string());
  GroundTruth truth;
  try {
    const json t = json::parse(in);
    const auto rot = t.at("rotation").get<std::vector<double>>();
    if (rot.size() != 9) throw Error(ErrorKind::Parse, "rotation needs 9 values");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) truth.rotation(r, c) = rot[3 * r + c];
    }
    for (const json& j : t.at("elements")) {
      TruthElement e;
      e.label = {j.at("element").at(0).get<int>(), j.at("element").at(1).get<int>()};
      e.name = j.at("name").get<std::string>();
      e.plane.normal = vec3_from(j.at("normal"));
      e.plane.offset = j.at("offset").get<double>();
      e.inward = vec3_from(j.at("inward"));
      e.origin = vec3_from(j.at("origin"));
      e.axis_s = vec3_from(j.at("axis_s"));
      e.axis_t = vec3_from(j.at("axis_t"));
      e.texture = texture_spec_from_json(j.at("texture"));
      truth.elements.push_back(std::move(e));
    }
    const fs::path mesh = truth_json.parent_path() / t.at("empty_room").get<std::string>();
    if (fs::exists(mesh)) truth.empty_room = load_mesh(mesh, std::nullopt, class_map);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, truth_json.string() + ": " + e.what());
  }
  return truth;
}

}  // namespace defurnish
