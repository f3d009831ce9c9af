#pragma once

#include "defurnish/cdt.hpp"
#include "defurnish/error.hpp"
#include "defurnish/mesh.hpp"
#include "defurnish/segmentation.hpp"
#include "defurnish/uv_mapping.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace defurnish {

struct Line3 {
  Vec3 point = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
};

/// Throws NoIntersection when the normals are within parallel_tol degrees.
Line3 intersect_planes(const Plane& a, const Plane& b, double parallel_tol = 5.0);

/// Throws DegenerateCorner when the normal matrix has condition number above 1e6.
Vec3 intersect_three(const Plane& a, const Plane& b, const Plane& c);

struct IntersectionEdge {
  FaceLabel plane_a;
  FaceLabel plane_b;
  Line3 line;
  double t_min = 0.0;
  double t_max = 0.0;
};

struct CornerPoint {
  std::array<FaceLabel, 3> planes;
  Vec3 position = Vec3::Zero();
};

/// 2D frame of an element plane used for boundary extraction and filling.
struct ElementFrame {
  Vec3 origin = Vec3::Zero();
  ChartFrame axes;

  Vec2 to_2d(const Vec3& p) const { return axes.project(p - origin); }
  Vec3 to_3d(const Vec2& q) const { return origin + q.x() * axes.u + q.y() * axes.v; }
};

ElementFrame element_frame(const PlaneSegment& element, const Vec3& origin, const Vec3& up_axis,
                           const Vec3& forward_axis);

struct BoundaryLoop {
  FaceLabel element;
  std::vector<std::uint32_t> vertices;  // implicit closure
  double signed_area = 0.0;             // as walked, in the element frame
  bool perimeter = false;
};

/// Every boundary loop of the faces, walked with the faces on the left.
/// Positive loops are perimeters, negative ones holes. Hole loops are
/// returned reversed (counter-clockwise). Each loop starts at its
/// lexicographically smallest vertex position.
/// Throws NonManifoldBoundary / OpenChain.
std::vector<BoundaryLoop> extract_boundary_loops(const LabeledMesh& mesh, const std::vector<std::uint32_t>& faces,
                                                 FaceLabel element, const ElementFrame& frame);

/// Hole loops only.
std::vector<BoundaryLoop> extract_hole_boundaries(const LabeledMesh& mesh, const std::vector<std::uint32_t>& faces,
                                                  FaceLabel element, const ElementFrame& frame);

/// Intersection line of a neighbour, expressed in the element frame.
struct FrameLine {
  FaceLabel neighbor;
  Line3 line;
  Vec2 point = Vec2::Zero();
  Vec2 direction = Vec2::UnitX();
  /// +1 when the element lies to the left of direction.
  int side = 1;

  double distance(const Vec2& q) const;  // positive on the element side
};

struct FrameCorner {
  std::size_t line_a = 0;
  std::size_t line_b = 0;
  Vec3 position = Vec3::Zero();
  Vec2 point = Vec2::Zero();
};

struct PolygonVertex {
  Vec2 point = Vec2::Zero();
  std::optional<std::uint32_t> mesh_vertex;
  /// Unset for clip points, which are lifted onto the element plane.
  std::optional<Vec3> position;
};

struct HoleRegion {
  std::vector<PolygonVertex> polygon;  // counter-clockwise
  std::vector<Segment2> constraints;
  bool notch = false;
};

/// Clips the polygon to the element side of every crossing line. Clip edges
/// become constraints; vertices close to a corner take its exact position.
/// Throws EmptyRegion when nothing is left.
HoleRegion clip_hole_region(HoleRegion region, const std::vector<FrameLine>& lines,
                            const std::vector<FrameCorner>& corners, double tolerance = 1e-9);

struct FillPatch {
  FaceLabel element;
  std::vector<Vec3> points;
  std::vector<std::optional<std::uint32_t>> mesh_vertex;  // per point
  std::vector<std::array<int, 3>> triangles;
};

/// CDT of the region lifted onto the element plane. Triangles wind with the
/// element's surface normal.
FillPatch fill_hole_cdt(const HoleRegion& region, const ElementFrame& frame, FaceLabel element,
                        const CdtOptions& options = {});

struct RemovalGroup {
  std::vector<ObjectBox> boxes;
  double volume = 0.0;
};

struct RemovalPlan {
  std::vector<RemovalGroup> groups;
};

/// Connected components of the box-overlap graph, smallest total volume first.
RemovalPlan plan_removal_order(const std::vector<ObjectBox>& boxes);

struct RemovalResult {
  LabeledMesh mesh;
  std::vector<std::uint32_t> removed_faces;  // input face indices, ascending
  std::map<FaceLabel, std::vector<std::uint32_t>> removed_structural;
};

RemovalResult remove_object_faces(const LabeledMesh& mesh, const std::vector<ObjectBox>& boxes,
                                  const ClassMap& class_map);

/// Hash-grid vertex merging.
class VertexWelder {
 public:
  VertexWelder(std::vector<Vec3>* vertices, double tolerance);

  /// Index of an existing vertex within tolerance, or a newly appended one.
  std::uint32_t weld(const Vec3& p);

 private:
  using Cell = std::array<std::int64_t, 3>;
  Cell cell_of(const Vec3& p) const;
  void insert(std::uint32_t index);

  std::vector<Vec3>* vertices_;
  double tolerance_;
  std::map<Cell, std::vector<std::uint32_t>> grid_;
};

struct ReconstructionOptions {
  Vec3 up_axis = Vec3::UnitZ();
  Vec3 forward_axis = Vec3::UnitY();
  double parallel_tol = 5.0;      // degrees
  double snap_tolerance = 0.01;   // perimeter vertex to intersection line, meters
  double weld_tolerance = 1e-6;
  CdtOptions cdt;
  int jobs = 1;
};

struct ElementFailure {
  FaceLabel element;
  ErrorKind kind = ErrorKind::InvalidArgument;
  std::string message;
};

struct ReconstructionReport {
  std::size_t removed_faces = 0;
  std::map<FaceLabel, std::size_t> removed_structural;
  std::map<FaceLabel, std::size_t> filled_faces;
  std::size_t filled_regions = 0;
  std::size_t open_holes = 0;  // hole loops left on planar elements
  std::vector<FaceLabel> unplaned_with_holes;
  std::vector<ElementFailure> failures;
};

struct ReconstructionResult {
  LabeledMesh mesh;
  /// Input segments with face ids refreshed for the output mesh.
  std::vector<PlaneSegment> segments;
  ReconstructionReport report;
};

/// Processes removal groups in plan order: remove faces, then fill the holes
/// and perimeter notches touching the group's boxes. A final pass fills any
/// remaining interior holes. Element failures leave the hole open.
ReconstructionResult reconstruct_scene(const LabeledMesh& mesh, const std::vector<PlaneSegment>& segments,
                                       const RemovalPlan& plan, const ClassMap& class_map,
                                       const ReconstructionOptions& options = {});

}  // namespace defurnish
