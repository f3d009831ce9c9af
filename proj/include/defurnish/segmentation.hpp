#pragma once

#include "defurnish/mesh.hpp"

#include <span>
#include <string>
#include <vector>

namespace defurnish {

/// Plane normal . x = offset, with a unit normal whose largest-magnitude
/// component is positive (first such axis on ties).
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;

  static Plane through(const Vec3& point, const Vec3& normal);

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
  Vec3 project(const Vec3& p) const { return p - signed_distance(p) * normal; }
};

Plane canonicalize(Plane plane);

enum class Orientation { Vertical, Horizontal, Slanted };

std::string_view to_string(Orientation o);
Orientation orientation_from_string(std::string_view s);

struct PlaneSegment {
  Plane plane;
  std::vector<std::uint32_t> face_ids;
  int class_id = 0;
  int instance_id = 0;
  Orientation orientation = Orientation::Vertical;
  /// +1 when the faces' winding agrees with plane.normal, -1 otherwise.
  int facing = 1;

  FaceLabel label() const { return {class_id, instance_id}; }
  /// Plane normal flipped to the side the surface faces.
  Vec3 surface_normal() const { return facing >= 0 ? plane.normal : Vec3(-plane.normal); }
};

struct RansacParams {
  double inlier_dist = 0.02;
  int max_iterations = 1000;
  int min_inlier_faces = 20;
  double normal_agreement = 30.0;  // degrees

  void check() const;
};

struct FaceSample {
  Vec3 centroid;
  Vec3 normal;  // zero disables the normal gate for this sample
  double area = 1.0;
  std::uint32_t face = 0;
};

struct PlaneFit {
  Plane plane;
  std::vector<std::uint32_t> inliers;  // FaceSample::face values
};

/// Area-weighted 3-point RANSAC followed by a least-squares refit on the inliers.
/// Deterministic for a fixed seed. Throws TooFewSamples / NoPlane.
PlaneFit fit_plane_ransac(std::span<const FaceSample> samples, const RansacParams& params, std::uint64_t seed);

std::vector<FaceSample> face_samples(const LabeledMesh& mesh, std::span<const std::uint32_t> faces);

Orientation classify_element_orientation(const Plane& plane, const Vec3& up_axis, double vertical_angle);

struct SegmentationOptions {
  RansacParams ransac;
  Vec3 up_axis = Vec3::UnitZ();
  double vertical_angle = 30.0;
  int jobs = 1;
};

struct SegmentationResult {
  std::vector<PlaneSegment> segments;
  /// Faces no plane claimed. Each source group's leftovers get one fresh label.
  std::vector<std::uint32_t> unplaned_faces;
  std::vector<FaceLabel> unplaned_labels;
  /// New label for every face (structural faces may be renumbered; others unchanged).
  std::vector<FaceLabel> face_labels;
  std::vector<std::string> warnings;
};

/// Iterative RANSAC per structural (class, instance) group. The first plane of
/// a group keeps the group's instance id; further planes and the unplaned
/// remainder get fresh ids above every id present in the mesh.
SegmentationResult segment_structural_planes(const LabeledMesh& mesh, const ClassMap& class_map,
                                             const SegmentationOptions& options, std::uint64_t seed);

/// Copy of the mesh carrying the refined labels.
LabeledMesh apply_segmentation(const LabeledMesh& mesh, const SegmentationResult& result);

struct ObjectBox {
  FaceLabel label;
  Vec3 min = Vec3::Zero();  // padded bounds
  Vec3 max = Vec3::Zero();
  double padding = 0.0;

  bool contains(const Vec3& p) const;
  bool overlaps(const ObjectBox& other) const;
  double volume() const;
};

/// One padded axis-aligned box per loose (class, instance).
std::vector<ObjectBox> object_bounding_boxes(const LabeledMesh& mesh, const ClassMap& class_map, double padding);

}  // namespace defurnish
