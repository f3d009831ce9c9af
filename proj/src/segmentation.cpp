#include "defurnish/segmentation.hpp"

#include "defurnish/error.hpp"
#include "defurnish/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <map>
#include <numeric>

namespace defurnish {

Plane canonicalize(Plane plane) {
  const double len = plane.normal.norm();
  if (!(len > 0.0)) throw Error(ErrorKind::InvalidArgument, "plane normal has zero length");
  plane.normal /= len;
  plane.offset /= len;
  int axis = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::abs(plane.normal[k]) > std::abs(plane.normal[axis])) axis = k;
  }
  if (plane.normal[axis] < 0.0) {
    plane.normal = -plane.normal;
    plane.offset = -plane.offset;
  }
  return plane;
}

Plane Plane::through(const Vec3& point, const Vec3& normal) {
  const Vec3 n = normal.normalized();
  return canonicalize(Plane{n, n.dot(point)});
}

std::string_view to_string(Orientation o) {
  switch (o) {
    case Orientation::Vertical: return "vertical";
    case Orientation::Horizontal: return "horizontal";
    case Orientation::Slanted: return "slanted";
  }
  return "vertical";
}

Orientation orientation_from_string(std::string_view s) {
  if (s == "vertical") return Orientation::Vertical;
  if (s == "horizontal") return Orientation::Horizontal;
  if (s == "slanted") return Orientation::Slanted;
  throw Error(ErrorKind::Parse, "unknown orientation '" + std::string(s) + "'");
}

void RansacParams::check() const {
  if (!(inlier_dist > 0.0)) throw Error(ErrorKind::InvalidArgument, "inlier_dist must be positive");
  if (max_iterations < 1) throw Error(ErrorKind::InvalidArgument, "max_iterations must be at least 1");
  if (min_inlier_faces < 3) throw Error(ErrorKind::InvalidArgument, "min_inlier_faces must be at least 3");
  if (!(normal_agreement > 0.0 && normal_agreement <= 90.0)) {
    throw Error(ErrorKind::InvalidArgument, "normal_agreement must be in (0, 90]");
  }
}

std::vector<FaceSample> face_samples(const LabeledMesh& mesh, std::span<const std::uint32_t> faces) {
  std::vector<FaceSample> out;
  out.reserve(faces.size());
  for (std::uint32_t f : faces) out.push_back({mesh.centroid(f), mesh.normal(f), mesh.area(f), f});
  return out;
}

namespace {

bool has_three_noncollinear(std::span<const FaceSample> samples) {
  if (samples.size() < 3) return false;
  const Vec3& a = samples[0].centroid;
  std::size_t far = 0;
  double far_d = -1.0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double d = (samples[i].centroid - a).squaredNorm();
    if (d > far_d) {
      far_d = d;
      far = i;
    }
  }
  if (!(far_d > 0.0)) return false;
  const Vec3 dir = (samples[far].centroid - a).normalized();
  const double scale = std::sqrt(far_d);
  for (const auto& s : samples) {
    if ((s.centroid - a).cross(dir).norm() > 1e-9 * scale) return true;
  }
  return false;
}

struct Scorer {
  const RansacParams& params;
  double cos_gate;

  bool accepts(const FaceSample& s, const Vec3& n, double offset) const {
    if (std::abs(n.dot(s.centroid) - offset) > params.inlier_dist) return false;
    if (s.normal.squaredNorm() == 0.0) return true;
    return std::abs(s.normal.dot(n)) >= cos_gate;
  }

  std::vector<std::size_t> inliers(std::span<const FaceSample> samples, const Vec3& n, double offset) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (accepts(samples[i], n, offset)) out.push_back(i);
    }
    return out;
  }
};

Plane least_squares_plane(std::span<const FaceSample> samples, const std::vector<std::size_t>& idx) {
  Vec3 mean = Vec3::Zero();
  for (std::size_t i : idx) mean += samples[i].centroid;
  mean /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i : idx) {
    const Vec3 d = samples[i].centroid - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  return Plane::through(mean, solver.eigenvectors().col(0));
}

}  // namespace

PlaneFit fit_plane_ransac(std::span<const FaceSample> samples, const RansacParams& params, std::uint64_t seed) {
  params.check();
  if (!has_three_noncollinear(samples)) {
    throw Error(ErrorKind::TooFewSamples, "need at least 3 non-collinear samples, got " + std::to_string(samples.size()));
  }
  const Scorer scorer{params, std::cos(deg_to_rad(params.normal_agreement))};

  std::vector<double> cumulative(samples.size());
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += std::max(0.0, samples[i].area);
    cumulative[i] = total;
  }
  const bool uniform = !(total > 0.0);

  Rng rng(seed);
  auto draw = [&]() -> std::size_t {
    if (uniform) return static_cast<std::size_t>(rng.below(samples.size()));
    const double r = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), r);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), samples.size() - 1);
  };

  std::size_t best_count = 0;
  Vec3 best_normal = Vec3::Zero();
  double best_offset = 0.0;
  for (int iter = 0; iter < params.max_iterations; ++iter) {
    const std::size_t i0 = draw();
    std::size_t i1 = draw();
    std::size_t i2 = draw();
    if (i0 == i1 || i0 == i2 || i1 == i2) continue;
    const Vec3& a = samples[i0].centroid;
    Vec3 n = (samples[i1].centroid - a).cross(samples[i2].centroid - a);
    const double len = n.norm();
    if (!(len > 1e-15)) continue;
    n /= len;
    const double offset = n.dot(a);
    std::size_t count = 0;
    for (const auto& s : samples) count += scorer.accepts(s, n, offset) ? 1 : 0;
    if (count > best_count) {
      best_count = count;
      best_normal = n;
      best_offset = offset;
    }
  }
  if (best_count < static_cast<std::size_t>(params.min_inlier_faces)) {
    throw Error(ErrorKind::NoPlane, "best hypothesis has " + std::to_string(best_count) + " inliers, need " +
                                        std::to_string(params.min_inlier_faces));
  }

  std::vector<std::size_t> inliers = scorer.inliers(samples, best_normal, best_offset);
  Plane plane = canonicalize(Plane{best_normal, best_offset});
  const Plane refit = least_squares_plane(samples, inliers);
  std::vector<std::size_t> refit_inliers = scorer.inliers(samples, refit.normal, refit.offset);
  if (refit_inliers.size() >= static_cast<std::size_t>(params.min_inlier_faces)) {
    plane = refit;
    inliers = std::move(refit_inliers);
  }

  PlaneFit fit{plane, {}};
  fit.inliers.reserve(inliers.size());
  for (std::size_t i : inliers) fit.inliers.push_back(samples[i].face);
  return fit;
}

Orientation classify_element_orientation(const Plane& plane, const Vec3& up_axis, double vertical_angle) {
  const double c = std::clamp(plane.normal.normalized().dot(up_axis.normalized()), -1.0, 1.0);
  const double theta = rad_to_deg(std::acos(c));
  if (theta <= vertical_angle || theta >= 180.0 - vertical_angle) return Orientation::Horizontal;
  if (std::abs(theta - 90.0) <= vertical_angle) return Orientation::Vertical;
  return Orientation::Slanted;
}

namespace {

struct GroupPlane {
  Plane plane;
  std::vector<std::uint32_t> faces;
};

struct GroupResult {
  std::vector<GroupPlane> planes;
  std::vector<std::uint32_t> leftovers;
  std::vector<std::string> warnings;
};

GroupResult segment_group(const LabeledMesh& mesh, FaceLabel label, const std::vector<std::uint32_t>& faces,
                          const RansacParams& params, std::uint64_t seed) {
  GroupResult out;
  std::vector<FaceSample> remaining = face_samples(mesh, faces);
  int round = 0;
  while (remaining.size() >= static_cast<std::size_t>(params.min_inlier_faces)) {
    PlaneFit fit;
    try {
      fit = fit_plane_ransac(remaining, params, hash_combine(seed, static_cast<std::uint64_t>(round++)));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoPlane && e.kind() != ErrorKind::TooFewSamples) throw;
      if (out.planes.empty()) {
        out.warnings.push_back("group (" + std::to_string(label.class_id) + "," + std::to_string(label.instance_id) +
                               "): " + e.what());
      }
      break;
    }
    std::vector<std::uint8_t> claimed_mask(mesh.face_count(), 0);
    for (std::uint32_t f : fit.inliers) claimed_mask[f] = 1;
    std::vector<FaceSample> rest;
    rest.reserve(remaining.size() - fit.inliers.size());
    for (const auto& s : remaining) {
      if (!claimed_mask[s.face]) rest.push_back(s);
    }
    std::sort(fit.inliers.begin(), fit.inliers.end());
    out.planes.push_back({fit.plane, std::move(fit.inliers)});
    remaining = std::move(rest);
  }

  // Unclaimed faces join the nearest extracted plane within 3x inlier_dist.
  for (const auto& s : remaining) {
    int best = -1;
    double best_d = 3.0 * params.inlier_dist;
    for (std::size_t p = 0; p < out.planes.size(); ++p) {
      const double d = std::abs(out.planes[p].plane.signed_distance(s.centroid));
      if (d <= best_d) {
        best_d = d;
        best = static_cast<int>(p);
      }
    }
    if (best >= 0) out.planes[best].faces.push_back(s.face);
    else out.leftovers.push_back(s.face);
  }
  for (auto& p : out.planes) std::sort(p.faces.begin(), p.faces.end());
  std::sort(out.leftovers.begin(), out.leftovers.end());
  return out;
}

}  // namespace

SegmentationResult segment_structural_planes(const LabeledMesh& mesh, const ClassMap& class_map,
                                             const SegmentationOptions& options, std::uint64_t seed) {
  options.ransac.check();
  std::map<FaceLabel, std::vector<std::uint32_t>> groups;
  int max_instance = 0;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    max_instance = std::max(max_instance, mesh.labels[f].instance_id);
    if (class_map.is_structural(mesh.labels[f].class_id)) groups[mesh.labels[f]].push_back(static_cast<std::uint32_t>(f));
  }
  std::vector<std::pair<FaceLabel, std::vector<std::uint32_t>>> ordered(groups.begin(), groups.end());
  std::vector<GroupResult> results(ordered.size());
  parallel_for(ordered.size(), options.jobs, [&](std::size_t g) {
    const FaceLabel label = ordered[g].first;
    results[g] = segment_group(mesh, label, ordered[g].second, options.ransac,
                               derive_seed(seed, label.class_id, label.instance_id));
  });

  SegmentationResult out;
  out.face_labels = mesh.labels;
  int next_instance = max_instance + 1;
  for (std::size_t g = 0; g < ordered.size(); ++g) {
    const FaceLabel label = ordered[g].first;
    GroupResult& res = results[g];
    for (auto& w : res.warnings) out.warnings.push_back(std::move(w));
    for (std::size_t p = 0; p < res.planes.size(); ++p) {
      PlaneSegment seg;
      seg.plane = res.planes[p].plane;
      seg.face_ids = std::move(res.planes[p].faces);
      seg.class_id = label.class_id;
      seg.instance_id = p == 0 ? label.instance_id : next_instance++;
      seg.orientation = classify_element_orientation(seg.plane, options.up_axis, options.vertical_angle);
      Vec3 accumulated = Vec3::Zero();
      for (std::uint32_t f : seg.face_ids) {
        accumulated += triangle_normal_raw(mesh.corner(f, 0), mesh.corner(f, 1), mesh.corner(f, 2));
        out.face_labels[f] = seg.label();
      }
      seg.facing = accumulated.dot(seg.plane.normal) >= 0.0 ? 1 : -1;
      out.segments.push_back(std::move(seg));
    }
    if (!res.leftovers.empty()) {
      const FaceLabel leftover{label.class_id, res.planes.empty() ? label.instance_id : next_instance++};
      out.unplaned_labels.push_back(leftover);
      for (std::uint32_t f : res.leftovers) {
        out.face_labels[f] = leftover;
        out.unplaned_faces.push_back(f);
      }
      out.warnings.push_back(std::to_string(res.leftovers.size()) + " faces of group (" + std::to_string(label.class_id) +
                             "," + std::to_string(label.instance_id) + ") are unplaned");
    }
  }
  std::sort(out.unplaned_faces.begin(), out.unplaned_faces.end());
  return out;
}

LabeledMesh apply_segmentation(const LabeledMesh& mesh, const SegmentationResult& result) {
  if (result.face_labels.size() != mesh.face_count()) {
    throw Error(ErrorKind::InvalidArgument, "segmentation does not match mesh face count");
  }
  LabeledMesh out = mesh;
  out.labels = result.face_labels;
  return out;
}

bool ObjectBox::contains(const Vec3& p) const {
  return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
}

bool ObjectBox::overlaps(const ObjectBox& other) const {
  return (min.array() <= other.max.array()).all() && (other.min.array() <= max.array()).all();
}

double ObjectBox::volume() const { return (max - min).prod(); }

std::vector<ObjectBox> object_bounding_boxes(const LabeledMesh& mesh, const ClassMap& class_map, double padding) {
  if (padding < 0.0) throw Error(ErrorKind::InvalidArgument, "padding must be non-negative");
  std::map<FaceLabel, ObjectBox> boxes;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    const FaceLabel label = mesh.labels[f];
    if (!class_map.is_loose(label.class_id)) continue;
    auto [it, inserted] = boxes.try_emplace(label);
    ObjectBox& box = it->second;
    if (inserted) {
      box.label = label;
      box.min = Vec3::Constant(std::numeric_limits<double>::infinity());
      box.max = Vec3::Constant(-std::numeric_limits<double>::infinity());
    }
    for (int k = 0; k < 3; ++k) {
      box.min = box.min.cwiseMin(mesh.corner(f, k));
      box.max = box.max.cwiseMax(mesh.corner(f, k));
    }
  }
  std::vector<ObjectBox> out;
  out.reserve(boxes.size());
  for (auto& [label, box] : boxes) {
    box.min.array() -= padding;
    box.max.array() += padding;
    box.padding = padding;
    out.push_back(box);
  }
  return out;
}

}  // namespace defurnish
