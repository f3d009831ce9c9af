#include "defurnish/mesh.hpp"

#include "defurnish/error.hpp"

#include <algorithm>
#include <limits>

namespace defurnish {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::FileNotFound: return "file not found";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::LabelCountMismatch: return "label count mismatch";
    case ErrorKind::UnknownClass: return "unknown class";
    case ErrorKind::TooFewSamples: return "too few samples";
    case ErrorKind::NoPlane: return "no plane";
    case ErrorKind::NoIntersection: return "no intersection";
    case ErrorKind::DegenerateCorner: return "degenerate corner";
    case ErrorKind::SelfIntersecting: return "self-intersecting polygon";
    case ErrorKind::ConstraintOutside: return "constraint outside polygon";
    case ErrorKind::EmptyRegion: return "empty region";
    case ErrorKind::NonManifoldBoundary: return "non-manifold boundary";
    case ErrorKind::OpenChain: return "open boundary chain";
    case ErrorKind::FoldOver: return "fold-over";
    case ErrorKind::DegenerateFrame: return "degenerate frame";
    case ErrorKind::DegenerateTriangle: return "degenerate triangle";
    case ErrorKind::InconsistentInput: return "inconsistent input";
    case ErrorKind::InsufficientReference: return "insufficient reference";
    case ErrorKind::CommandFailed: return "command failed";
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::SizeMismatch: return "size mismatch";
    case ErrorKind::ChartTooLarge: return "chart too large";
    case ErrorKind::AtlasOverflow: return "atlas overflow";
    case ErrorKind::UnplacedFace: return "unplaced face";
    case ErrorKind::SchemaVersion: return "schema version mismatch";
    case ErrorKind::MissingIntermediate: return "missing intermediate";
    case ErrorKind::CorrespondenceFailure: return "correspondence failure";
  }
  return "error";
}

// ---------------------------------------------------------------------------
// ClassMap

ClassMap ClassMap::defaults() {
  ClassMap map;
  map.add(0, {"unknown", ElementKind::Structural, std::nullopt});
  map.add(1, {"wall", ElementKind::Structural, std::nullopt});
  map.add(2, {"floor", ElementKind::Structural, std::nullopt});
  map.add(3, {"ceiling", ElementKind::Structural, std::nullopt});
  map.add(4, {"beam", ElementKind::Structural, std::nullopt});
  map.add(5, {"column", ElementKind::Structural, std::nullopt});
  map.add(10, {"chair", ElementKind::Loose, std::nullopt});
  map.add(11, {"table", ElementKind::Loose, std::nullopt});
  map.add(12, {"sofa", ElementKind::Loose, std::nullopt});
  map.add(13, {"cabinet", ElementKind::Loose, std::nullopt});
  map.add(14, {"bed", ElementKind::Loose, std::nullopt});
  map.add(15, {"object", ElementKind::Loose, std::nullopt});
  map.set_unknown_class(0);
  return map;
}

void ClassMap::add(int class_id, ClassInfo info) {
  if (!classes_.emplace(class_id, std::move(info)).second) {
    throw Error(ErrorKind::InvalidArgument, "duplicate class id " + std::to_string(class_id));
  }
}

const ClassInfo& ClassMap::at(int class_id) const {
  auto it = classes_.find(class_id);
  if (it == classes_.end()) throw Error(ErrorKind::UnknownClass, "class id " + std::to_string(class_id));
  return it->second;
}

bool ClassMap::is_structural(int class_id) const {
  auto it = classes_.find(class_id);
  return it != classes_.end() && it->second.kind == ElementKind::Structural;
}

bool ClassMap::is_loose(int class_id) const {
  auto it = classes_.find(class_id);
  return it != classes_.end() && it->second.kind == ElementKind::Loose;
}

void ClassMap::set_unknown_class(int class_id) {
  if (!is_structural(class_id)) {
    throw Error(ErrorKind::InvalidArgument, "unknown class must be a structural class id");
  }
  unknown_class_ = class_id;
}

void ClassMap::check_pipeline_ready() const {
  bool structural = false;
  bool loose = false;
  for (const auto& [id, info] : classes_) {
    structural |= info.kind == ElementKind::Structural;
    loose |= info.kind == ElementKind::Loose;
  }
  if (!structural || !loose) {
    throw Error(ErrorKind::InvalidArgument, "class map needs at least one structural and one loose class");
  }
}

// ---------------------------------------------------------------------------
// LabeledMesh

CornerUvs missing_uvs() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {Vec2(nan, nan), Vec2(nan, nan), Vec2(nan, nan)};
}

bool LabeledMesh::face_has_uv(std::size_t f) const {
  if (corner_uvs.empty()) return false;
  for (const Vec2& uv : corner_uvs[f]) {
    if (!std::isfinite(uv.x()) || !std::isfinite(uv.y())) return false;
  }
  return true;
}

const TextureImage* LabeledMesh::texture_for_face(std::size_t f) const {
  const std::size_t page = face_texture.empty() ? 0 : face_texture[f];
  if (page >= textures.size()) return nullptr;
  return textures[page].get();
}

Vec3 LabeledMesh::centroid(std::size_t f) const {
  const Triangle& t = triangles[f];
  return (vertices[t[0]] + vertices[t[1]] + vertices[t[2]]) / 3.0;
}

double LabeledMesh::area(std::size_t f) const {
  const Triangle& t = triangles[f];
  return triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
}

Vec3 LabeledMesh::normal(std::size_t f) const {
  const Triangle& t = triangles[f];
  const Vec3 n = triangle_normal_raw(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

void LabeledMesh::add_face(const Triangle& tri, FaceLabel label, bool is_new, const std::optional<CornerUvs>& uvs,
                           std::uint32_t texture_page) {
  triangles.push_back(tri);
  labels.push_back(label);
  face_is_new.push_back(is_new ? 1 : 0);
  if (!corner_uvs.empty() || uvs) {
    corner_uvs.resize(triangles.size() - 1, missing_uvs());
    corner_uvs.push_back(uvs ? *uvs : missing_uvs());
  }
  if (!face_texture.empty() || texture_page != 0) {
    face_texture.resize(triangles.size() - 1, 0);
    face_texture.push_back(texture_page);
  }
}

void LabeledMesh::check_invariants() const {
  const std::size_t n = triangles.size();
  if (labels.size() != n || face_is_new.size() != n || (!corner_uvs.empty() && corner_uvs.size() != n) ||
      (!face_texture.empty() && face_texture.size() != n)) {
    throw Error(ErrorKind::InvalidArgument, "per-face arrays do not match triangle count");
  }
  for (std::size_t f = 0; f < n; ++f) {
    const Triangle& t = triangles[f];
    for (std::uint32_t v : t) {
      if (v >= vertices.size()) {
        throw Error(ErrorKind::InvalidArgument, "face " + std::to_string(f) + " references missing vertex");
      }
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw Error(ErrorKind::InvalidArgument, "face " + std::to_string(f) + " repeats a vertex");
    }
  }
  for (const auto& tex : textures) {
    if (!tex || !tex->valid()) throw Error(ErrorKind::InvalidArgument, "invalid texture image");
  }
}

LabeledMesh extract_faces(const LabeledMesh& mesh, const std::vector<std::uint32_t>& faces,
                          std::vector<std::uint32_t>* vertex_remap) {
  std::vector<std::uint8_t> used(mesh.vertices.size(), 0);
  for (std::uint32_t f : faces) {
    for (std::uint32_t v : mesh.triangles[f]) used[v] = 1;
  }
  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> new_index(mesh.vertices.size(), kNone);
  LabeledMesh out;
  if (vertex_remap) vertex_remap->clear();
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    if (!used[v]) continue;
    new_index[v] = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.push_back(mesh.vertices[v]);
    if (vertex_remap) vertex_remap->push_back(static_cast<std::uint32_t>(v));
  }
  out.textures = mesh.textures;
  out.triangles.reserve(faces.size());
  out.labels.reserve(faces.size());
  out.face_is_new.reserve(faces.size());
  for (std::uint32_t f : faces) {
    const Triangle& t = mesh.triangles[f];
    out.triangles.push_back({new_index[t[0]], new_index[t[1]], new_index[t[2]]});
    out.labels.push_back(mesh.labels[f]);
    out.face_is_new.push_back(mesh.face_is_new[f]);
    if (mesh.has_uvs()) out.corner_uvs.push_back(mesh.corner_uvs[f]);
    if (!mesh.face_texture.empty()) out.face_texture.push_back(mesh.face_texture[f]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adjacency

const EdgeFaces* FaceAdjacency::find(Edge edge) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), edge,
                             [](const EdgeFaces& e, const Edge& key) { return e.edge < key; });
  if (it == entries_.end() || it->edge != edge) return nullptr;
  return &*it;
}

std::vector<Edge> FaceAdjacency::non_manifold_edges() const {
  std::vector<Edge> out;
  for (const auto& e : entries_) {
    if (e.non_manifold()) out.push_back(e.edge);
  }
  return out;
}

std::size_t FaceAdjacency::incidence_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.faces.size();
  return n;
}

FaceAdjacency build_adjacency(const LabeledMesh& mesh, const std::vector<std::uint32_t>& faces) {
  std::vector<std::pair<Edge, std::uint32_t>> incidences;
  incidences.reserve(faces.size() * 3);
  for (std::uint32_t f : faces) {
    const Triangle& t = mesh.triangles[f];
    for (int k = 0; k < 3; ++k) incidences.emplace_back(Edge::of(t[k], t[(k + 1) % 3]), f);
  }
  std::sort(incidences.begin(), incidences.end());
  std::vector<EdgeFaces> entries;
  for (std::size_t i = 0; i < incidences.size();) {
    EdgeFaces entry{incidences[i].first, {}};
    while (i < incidences.size() && incidences[i].first == entry.edge) {
      entry.faces.push_back(incidences[i].second);
      ++i;
    }
    entries.push_back(std::move(entry));
  }
  return FaceAdjacency(std::move(entries));
}

FaceAdjacency build_adjacency(const LabeledMesh& mesh) {
  std::vector<std::uint32_t> all(mesh.face_count());
  for (std::size_t f = 0; f < all.size(); ++f) all[f] = static_cast<std::uint32_t>(f);
  return build_adjacency(mesh, all);
}

// ---------------------------------------------------------------------------
// Validation

ValidationReport validate(const LabeledMesh& mesh, double min_area) {
  ValidationReport report;
  const std::size_t n = mesh.face_count();
  report.array_size_mismatch = mesh.labels.size() != n || mesh.face_is_new.size() != n ||
                               (mesh.has_uvs() && mesh.corner_uvs.size() != n) ||
                               (!mesh.face_texture.empty() && mesh.face_texture.size() != n);

  std::vector<std::uint8_t> referenced(mesh.vertices.size(), 0);
  std::vector<std::uint32_t> good_faces;
  for (std::size_t f = 0; f < n; ++f) {
    const Triangle& t = mesh.triangles[f];
    const bool in_range = t[0] < mesh.vertices.size() && t[1] < mesh.vertices.size() && t[2] < mesh.vertices.size();
    if (!in_range || t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      report.invalid_faces.push_back(static_cast<std::uint32_t>(f));
      continue;
    }
    for (std::uint32_t v : t) referenced[v] = 1;
    good_faces.push_back(static_cast<std::uint32_t>(f));
    if (mesh.area(f) < min_area) report.degenerate_faces.push_back(static_cast<std::uint32_t>(f));
  }
  for (std::size_t v = 0; v < referenced.size(); ++v) {
    if (!referenced[v]) report.unreferenced_vertices.push_back(static_cast<std::uint32_t>(v));
  }
  report.non_manifold_edges = build_adjacency(mesh, good_faces).non_manifold_edges();
  if (mesh.has_uvs() && mesh.corner_uvs.size() == n) {
    for (std::size_t f = 0; f < n; ++f) {
      if (!mesh.face_has_uv(f)) continue;
      for (int k = 0; k < 3; ++k) {
        const Vec2& uv = mesh.corner_uvs[f][k];
        if (uv.x() < 0.0 || uv.x() > 1.0 || uv.y() < 0.0 || uv.y() > 1.0) {
          report.out_of_range_uvs.push_back({static_cast<std::uint32_t>(f), k});
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Instance split

std::vector<MeshPart> split_by_instance(const LabeledMesh& mesh) {
  std::map<FaceLabel, std::vector<std::uint32_t>> groups;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) groups[mesh.labels[f]].push_back(static_cast<std::uint32_t>(f));
  std::vector<MeshPart> parts;
  parts.reserve(groups.size());
  for (auto& [key, faces] : groups) {
    MeshPart part;
    part.key = key;
    part.mesh = extract_faces(mesh, faces, &part.vertex_remap);
    part.face_remap = std::move(faces);
    parts.push_back(std::move(part));
  }
  return parts;
}

LabeledMesh reassemble(const std::vector<MeshPart>& parts, std::size_t face_count, std::size_t vertex_count) {
  LabeledMesh out;
  out.vertices.assign(vertex_count, Vec3::Zero());
  out.triangles.assign(face_count, Triangle{0, 0, 0});
  out.labels.assign(face_count, FaceLabel{});
  out.face_is_new.assign(face_count, 0);
  const bool uvs = std::any_of(parts.begin(), parts.end(), [](const MeshPart& p) { return p.mesh.has_uvs(); });
  const bool pages =
      std::any_of(parts.begin(), parts.end(), [](const MeshPart& p) { return !p.mesh.face_texture.empty(); });
  if (uvs) out.corner_uvs.assign(face_count, missing_uvs());
  if (pages) out.face_texture.assign(face_count, 0);
  for (const MeshPart& part : parts) {
    if (out.textures.empty()) out.textures = part.mesh.textures;
    for (std::size_t v = 0; v < part.vertex_remap.size(); ++v) out.vertices[part.vertex_remap[v]] = part.mesh.vertices[v];
    for (std::size_t f = 0; f < part.face_remap.size(); ++f) {
      const std::uint32_t of = part.face_remap[f];
      const Triangle& t = part.mesh.triangles[f];
      out.triangles[of] = {part.vertex_remap[t[0]], part.vertex_remap[t[1]], part.vertex_remap[t[2]]};
      out.labels[of] = part.mesh.labels[f];
      out.face_is_new[of] = part.mesh.face_is_new[f];
      if (uvs && part.mesh.has_uvs()) out.corner_uvs[of] = part.mesh.corner_uvs[f];
      if (pages && !part.mesh.face_texture.empty()) out.face_texture[of] = part.mesh.face_texture[f];
    }
  }
  return out;
}

}  // namespace defurnish
