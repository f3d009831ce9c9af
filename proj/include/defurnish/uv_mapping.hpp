#pragma once

#include "defurnish/mesh.hpp"
#include "defurnish/segmentation.hpp"

#include <vector>

namespace defurnish {

/// Orthonormal chart axes in an element plane; u x v = normal.
struct ChartFrame {
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
  Vec3 normal = Vec3::UnitZ();

  Vec2 project(const Vec3& p) const { return {p.dot(u), p.dot(v)}; }
};

/// Vertical and Slanted: v follows up_axis projected into the plane.
/// Horizontal: v follows forward_axis. Throws DegenerateFrame when the
/// reference axis is parallel to the normal.
ChartFrame orientation_frame(const Vec3& surface_normal, Orientation orientation, const Vec3& up_axis,
                             const Vec3& forward_axis);

struct UvChart {
  FaceLabel element;
  int component = 0;
  Orientation orientation = Orientation::Vertical;
  std::vector<std::uint32_t> face_ids;
  std::vector<CornerUvs> uvs;  // one entry per face_ids entry
  ChartFrame frame;
  /// Frame coordinates of the chart's local (0, 0).
  Vec2 origin = Vec2::Zero();
  /// 0 while coordinates are in meters.
  double texel_density = 0.0;
  double requested_density = 0.0;
  bool downscaled = false;

  Vec2 extent() const;
  /// Texel size of the chart raster (at least 1 x 1).
  std::array<int, 2> texel_size() const;
};

/// Undirected edges that are mesh boundaries or separate different labels.
std::vector<Edge> mark_semantic_seams(const LabeledMesh& mesh);

/// Rigid projection of the faces onto the frame, one chart per edge-connected
/// component, each translated so its bounding box starts at (0, 0).
/// Throws FoldOver when a projected triangle has non-positive area.
std::vector<UvChart> unwrap_element(const LabeledMesh& mesh, FaceLabel element,
                                    const std::vector<std::uint32_t>& faces, const ChartFrame& frame);

/// Re-expresses the chart in the frame for its orientation. Coordinates stay
/// rigid; only the in-plane rotation changes.
UvChart orient_chart(const UvChart& chart, Orientation orientation, const Vec3& up_axis, const Vec3& forward_axis);

struct DistortionStats {
  std::vector<double> stretch;  // per chart face
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;  // area weighted
};

/// Per-face L2 stretch, normalized by the chart's texel density.
DistortionStats compute_distortion(const LabeledMesh& mesh, const UvChart& chart);

/// Scales coordinates to texels; charts wider than max_chart_texels are
/// uniformly downscaled and keep their effective density.
std::vector<UvChart> assign_texel_density(std::vector<UvChart> charts, double density, int max_chart_texels);

/// Fraction of same-label adjacent face pairs kept together with a shared 2D edge.
double adjacency_preservation(const LabeledMesh& mesh, const std::vector<UvChart>& charts,
                              double tolerance = 1e-6);

}  // namespace defurnish
