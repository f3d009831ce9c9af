#pragma once

#include <atomic>
#include <cmath>
#include <limits>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "defurnish/mesh.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("defurnish-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// nu x nv grid of quads spanning origin + [0, nu*du] x [0, nv*dv]; faces wind with du x dv.
inline defurnish::LabeledMesh grid_mesh(const defurnish::Vec3& origin, const defurnish::Vec3& du,
                                        const defurnish::Vec3& dv, int nu, int nv, defurnish::FaceLabel label) {
  defurnish::LabeledMesh mesh;
  for (int j = 0; j <= nv; ++j) {
    for (int i = 0; i <= nu; ++i) mesh.vertices.push_back(origin + i * du + j * dv);
  }
  auto id = [&](int i, int j) { return static_cast<std::uint32_t>(j * (nu + 1) + i); };
  for (int j = 0; j < nv; ++j) {
    for (int i = 0; i < nu; ++i) {
      mesh.add_face({id(i, j), id(i + 1, j), id(i + 1, j + 1)}, label, false);
      mesh.add_face({id(i, j), id(i + 1, j + 1), id(i, j + 1)}, label, false);
    }
  }
  return mesh;
}

// Appends `part` to `mesh` without welding.
inline void append_mesh(defurnish::LabeledMesh& mesh, const defurnish::LabeledMesh& part) {
  const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
  mesh.vertices.insert(mesh.vertices.end(), part.vertices.begin(), part.vertices.end());
  for (std::size_t f = 0; f < part.face_count(); ++f) {
    const auto& t = part.triangles[f];
    mesh.add_face({t[0] + base, t[1] + base, t[2] + base}, part.labels[f], part.face_is_new[f] != 0);
  }
}

}  // namespace testing

#include "defurnish/reconstruction.hpp"
#include "defurnish/segmentation.hpp"
#include "defurnish/synth.hpp"

namespace testing {

struct Reconstructed {
  defurnish::SynthRoom room;
  defurnish::SegmentationResult segmentation;
  defurnish::RemovalPlan plan;
  defurnish::ReconstructionResult result;
};

inline Reconstructed reconstruct_room(const defurnish::RoomSpec& spec, double padding = 0.02) {
  using namespace defurnish;
  Reconstructed r;
  r.room = generate_room(spec);
  const ClassMap classes = ClassMap::defaults();
  r.segmentation = segment_structural_planes(r.room.furnished, classes, SegmentationOptions{}, 42);
  const LabeledMesh labeled = apply_segmentation(r.room.furnished, r.segmentation);
  r.plan = plan_removal_order(object_bounding_boxes(labeled, classes, padding));
  r.result = reconstruct_scene(labeled, r.segmentation.segments, r.plan, classes);
  return r;
}

// Largest plane residual over the vertices of new faces, against the truth element of each face.
inline double max_new_vertex_residual(const defurnish::LabeledMesh& mesh, const defurnish::GroundTruth& truth) {
  double worst = 0.0;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    if (!mesh.face_is_new[f]) continue;
    const auto* element = truth.find(mesh.labels[f]);
    if (!element) return std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(element->plane.signed_distance(mesh.corner(f, k))));
  }
  return worst;
}

}  // namespace testing
