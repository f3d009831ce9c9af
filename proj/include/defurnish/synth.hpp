#pragma once

#include "defurnish/mesh.hpp"
#include "defurnish/segmentation.hpp"

#include <Eigen/Core>

#include <array>
#include <string>
#include <vector>

namespace defurnish {

enum class TextureKind { Constant, Stripes, Checker, Noise };

std::string_view to_string(TextureKind kind);
TextureKind texture_kind_from_string(std::string_view s);

/// Analytic surface texture over surface coordinates (s, t) in meters.
struct TextureSpec {
  TextureKind kind = TextureKind::Constant;
  std::array<std::uint8_t, 3> color_a{180, 170, 160};
  std::array<std::uint8_t, 3> color_b{120, 110, 100};
  double period = 0.25;  // stripes
  double angle = 0.0;    // stripes, degrees
  double size = 0.25;    // checker cell, noise lattice
  std::uint64_t seed = 0;

  std::array<double, 3> color(double s, double t) const;
};

struct BoxObject {
  Vec3 min = Vec3::Zero();
  Vec3 size = Vec3::Ones();
  int class_id = 13;
};

struct RoomSpec {
  Vec3 extents{5.0, 4.0, 2.5};
  double edge_length = 0.25;
  TextureSpec floor{TextureKind::Stripes, {180, 150, 120}, {120, 100, 80}, 0.25, 0.0, 0.25, 0};
  TextureSpec wall{TextureKind::Constant, {200, 196, 188}, {0, 0, 0}, 0.25, 0.0, 0.25, 0};
  TextureSpec ceiling{TextureKind::Checker, {230, 230, 230}, {210, 210, 210}, 0.25, 0.0, 0.5, 0};
  std::vector<BoxObject> objects;
  double rotation = 0.0;         // degrees about +Z through the origin
  double source_density = 64.0;  // texels per meter of the source atlas
  std::uint64_t seed = 0;
};

struct TruthElement {
  FaceLabel label;
  std::string name;
  Plane plane;  // canonical
  Vec3 inward = Vec3::UnitZ();
  Vec3 origin = Vec3::Zero();  // unrotated surface-coordinate origin
  Vec3 axis_s = Vec3::UnitX();
  Vec3 axis_t = Vec3::UnitY();
  TextureSpec texture;

  /// Analytic color at a point of the (rotated) room.
  std::array<double, 3> color_at(const Vec3& p, const Eigen::Matrix3d& rotation) const;
};

struct GroundTruth {
  LabeledMesh empty_room;
  std::vector<TruthElement> elements;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();

  const TruthElement* find(FaceLabel label) const;
};

struct SynthRoom {
  LabeledMesh furnished;
  GroundTruth truth;
};

/// Axis-aligned room with 4 walls, floor and ceiling on a shared grid, a
/// source atlas with the analytic textures, and box objects. Structural faces
/// whose centroid lies inside a box are deleted. Throws InvalidArgument for
/// objects outside the room.
SynthRoom generate_room(const RoomSpec& spec);

/// The fixture used for end-to-end checks: about 50k faces, three boxes.
RoomSpec standard_room_spec(std::uint64_t seed = 42);

}  // namespace defurnish
