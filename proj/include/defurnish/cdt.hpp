#pragma once

#include "defurnish/geometry.hpp"

#include <array>
#include <span>
#include <utility>
#include <vector>

namespace defurnish {

struct Segment2 {
  Vec2 a;
  Vec2 b;
};

struct CdtOptions {
  /// When positive, interior points are inserted until no unconstrained edge is longer.
  double max_edge_length = 0.0;
  int max_refinement_points = 10000;
};

struct CdtResult {
  /// Polygon vertices first, in input order, then every point the triangulation added.
  std::vector<Vec2> points;
  std::size_t polygon_size = 0;
  /// Counter-clockwise triangles indexing `points`.
  std::vector<std::array<int, 3>> triangles;
  /// Polygon edges and constraint pieces, as (min, max) index pairs.
  std::vector<std::pair<int, int>> constrained_edges;
};

/// True when the closed polygon has at least 3 distinct vertices and no two
/// non-adjacent edges touch.
bool is_simple_polygon(std::span<const Vec2> polygon);

/// Constrained Delaunay triangulation of a simple polygon's interior. Every
/// constraint segment (inside or on the polygon) appears as a union of
/// triangulation edges; constraint endpoints and crossings become vertices.
/// Throws SelfIntersecting / ConstraintOutside.
CdtResult triangulate_polygon(std::span<const Vec2> polygon, std::span<const Segment2> constraints,
                              const CdtOptions& options = {});

}  // namespace defurnish
