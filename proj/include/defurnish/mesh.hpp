#pragma once

#include "defurnish/geometry.hpp"
#include "defurnish/image.hpp"

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace defurnish {

struct FaceLabel {
  int class_id = 0;
  int instance_id = 0;

  auto operator<=>(const FaceLabel&) const = default;
};

using Triangle = std::array<std::uint32_t, 3>;
using CornerUvs = std::array<Vec2, 3>;

enum class ElementKind { Structural, Loose };

struct ClassInfo {
  std::string name;
  ElementKind kind = ElementKind::Structural;
  std::optional<std::array<std::uint8_t, 3>> color;

  bool operator==(const ClassInfo&) const = default;
};

/// Class id -> semantic kind. `unknown_class` is used for faces without labels.
class ClassMap {
 public:
  static ClassMap defaults();

  void add(int class_id, ClassInfo info);
  bool contains(int class_id) const { return classes_.count(class_id) != 0; }
  const ClassInfo& at(int class_id) const;
  bool is_structural(int class_id) const;
  bool is_loose(int class_id) const;

  int unknown_class() const { return unknown_class_; }
  void set_unknown_class(int class_id);

  const std::map<int, ClassInfo>& classes() const { return classes_; }

  /// Throws InvalidArgument unless at least one structural and one loose class exist.
  void check_pipeline_ready() const;

  bool operator==(const ClassMap&) const = default;

 private:
  std::map<int, ClassInfo> classes_;
  int unknown_class_ = 0;
};

/// Indexed triangle mesh with per-face semantic labels.
///
/// corner_uvs is either empty or has one entry per triangle; faces without a
/// texture mapping (freshly filled geometry) carry NaN coordinates. textures
/// holds the texture pages; face_texture selects a page per face and may be
/// empty when there is at most one page.
struct LabeledMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<FaceLabel> labels;
  std::vector<std::uint8_t> face_is_new;
  std::vector<CornerUvs> corner_uvs;
  std::vector<std::shared_ptr<const TextureImage>> textures;
  std::vector<std::uint32_t> face_texture;

  std::size_t face_count() const { return triangles.size(); }
  bool has_uvs() const { return !corner_uvs.empty(); }
  bool face_has_uv(std::size_t f) const;
  const TextureImage* texture_for_face(std::size_t f) const;

  Vec3 corner(std::size_t f, int k) const { return vertices[triangles[f][k]]; }
  Vec3 centroid(std::size_t f) const;
  double area(std::size_t f) const;
  /// Unit normal following the triangle winding; zero for degenerate faces.
  Vec3 normal(std::size_t f) const;

  /// Appends a face, keeping all per-face arrays in step.
  void add_face(const Triangle& tri, FaceLabel label, bool is_new, const std::optional<CornerUvs>& uvs = std::nullopt,
                std::uint32_t texture_page = 0);

  /// Throws InvalidArgument when a structural invariant is broken.
  void check_invariants() const;
};

CornerUvs missing_uvs();

/// Keeps only the listed faces (in the given order) and drops vertices no longer referenced.
/// Vertex order is preserved. `vertex_remap` receives new -> old indices when non-null.
LabeledMesh extract_faces(const LabeledMesh& mesh, const std::vector<std::uint32_t>& faces,
                          std::vector<std::uint32_t>* vertex_remap = nullptr);

struct Edge {
  std::uint32_t a = 0;
  std::uint32_t b = 0;

  static Edge of(std::uint32_t u, std::uint32_t v) { return u < v ? Edge{u, v} : Edge{v, u}; }
  auto operator<=>(const Edge&) const = default;
};

struct EdgeFaces {
  Edge edge;
  std::vector<std::uint32_t> faces;

  bool boundary() const { return faces.size() == 1; }
  bool non_manifold() const { return faces.size() > 2; }
};

class FaceAdjacency {
 public:
  explicit FaceAdjacency(std::vector<EdgeFaces> entries) : entries_(std::move(entries)) {}

  const std::vector<EdgeFaces>& entries() const { return entries_; }
  const EdgeFaces* find(Edge edge) const;
  std::vector<Edge> non_manifold_edges() const;
  std::size_t incidence_count() const;

 private:
  std::vector<EdgeFaces> entries_;
};

FaceAdjacency build_adjacency(const LabeledMesh& mesh);

/// Same, restricted to a subset of faces.
FaceAdjacency build_adjacency(const LabeledMesh& mesh, const std::vector<std::uint32_t>& faces);

struct ValidationReport {
  struct UvIssue {
    std::uint32_t face;
    int corner;
  };
  std::vector<std::uint32_t> invalid_faces;  // bad index or repeated vertex
  std::vector<std::uint32_t> degenerate_faces;
  std::vector<Edge> non_manifold_edges;
  std::vector<std::uint32_t> unreferenced_vertices;
  std::vector<UvIssue> out_of_range_uvs;
  bool array_size_mismatch = false;

  bool empty() const {
    return invalid_faces.empty() && degenerate_faces.empty() && non_manifold_edges.empty() &&
           unreferenced_vertices.empty() && out_of_range_uvs.empty() && !array_size_mismatch;
  }
};

inline constexpr double kDefaultMinArea = 1e-10;

ValidationReport validate(const LabeledMesh& mesh, double min_area = kDefaultMinArea);

struct MeshPart {
  FaceLabel key;
  LabeledMesh mesh;
  std::vector<std::uint32_t> face_remap;    // part face -> original face
  std::vector<std::uint32_t> vertex_remap;  // part vertex -> original vertex
};

/// One part per (class, instance), ordered by label.
std::vector<MeshPart> split_by_instance(const LabeledMesh& mesh);

/// Inverse of split_by_instance.
LabeledMesh reassemble(const std::vector<MeshPart>& parts, std::size_t face_count, std::size_t vertex_count);

}  // namespace defurnish
