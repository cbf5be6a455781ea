#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "kinefit/error.hpp"

namespace kinefit {

enum class CoordKind { Rotation, Translation };
enum class CoordClass { Free, Constrained };

/// One scalar degree of freedom of the skeletal model. Rotations are radians,
/// translations meters; file I/O converts rotations to degrees.
struct Coordinate {
  std::string name;
  CoordKind kind = CoordKind::Rotation;
  CoordClass cls = CoordClass::Free;
  std::optional<std::pair<double, double>> range;  // required iff constrained
  double default_value = 0.0;
};

/// Rigid body in the kinematic tree. Rotational coordinates apply as intrinsic
/// successive rotations about `rotation_axes`, in the order listed in
/// `coordinates`. `joint_offset_in_parent` is expressed in the parent frame
/// and is therefore resized by the parent's scale factors; `mass_center_offset`
/// lives in this segment's frame and follows this segment's factors.
struct BodySegment {
  std::string name;
  int parent = -1;  // index into SkeletalModel::segments, -1 for the root
  Eigen::Vector3d joint_offset_in_parent = Eigen::Vector3d::Zero();
  Eigen::Vector3d mass_center_offset = Eigen::Vector3d::Zero();
  std::vector<int> coordinates;                 // indices into model coordinates
  std::vector<Eigen::Vector3d> rotation_axes;   // one per rotational coordinate
};

struct Marker {
  std::string name;
  int segment = -1;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();  // segment frame, meters
};

/// Per-segment componentwise scale factors, rows ordered as model segments.
struct ScaleSet {
  Eigen::Matrix<double, Eigen::Dynamic, 3> factors;

  static ScaleSet ones(int segment_count) {
    ScaleSet s;
    s.factors = Eigen::Matrix<double, Eigen::Dynamic, 3>::Ones(segment_count, 3);
    return s;
  }
  int segment_count() const { return static_cast<int>(factors.rows()); }
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string to_text() const;
};

struct FreeConstrainedSplit {
  std::vector<int> free_rotational;  // coordinate indices
  std::vector<int> constrained;      // coordinate indices (any kind)
};

class SkeletalModel {
public:
  std::string name;
  std::vector<Coordinate> coordinates;  // global coordinate vector order
  std::vector<BodySegment> segments;
  std::vector<Marker> markers;
  // Optional declared counts from the model file, checked during validation.
  // Keys: "coordinates", "segments", "keypoints", "free_rotations", "markers".
  std::vector<std::pair<std::string, int>> declared_counts;

  int coordinate_count() const { return static_cast<int>(coordinates.size()); }
  int segment_count() const { return static_cast<int>(segments.size()); }
  int keypoint_count() const { return 2 * segment_count(); }
  int marker_count() const { return static_cast<int>(markers.size()); }

  int root_segment() const;  // throws Validation if zero or multiple roots

  int coordinate_index(const std::string& name) const;  // -1 if absent
  int segment_index(const std::string& name) const;
  int marker_index(const std::string& name) const;

  /// Index of the segment owning coordinate `coord`, -1 if unreferenced.
  int owner_segment(int coord) const;

  /// Keypoint labels: all joint centers in segment order ("<seg>_jc"), then
  /// all segment mass centers ("<seg>_mc").
  std::vector<std::string> keypoint_labels() const;

  Eigen::VectorXd default_pose_values() const;

  /// True if `ancestor` lies on the parent chain of `segment` (inclusive).
  bool is_ancestor_or_self(int ancestor, int segment) const;
};

SkeletalModel load_model(const std::string& path);
void save_model(const SkeletalModel& model, const std::string& path);

ValidationReport validate_model(const SkeletalModel& model);

/// Plausibility gate on scale factors; bounds configurable.
ValidationReport validate_scales(const ScaleSet& scales, const SkeletalModel& model,
                                 double low = 0.5, double high = 2.0);

/// Partition of coordinates into unconstrained rotations and range-limited
/// coordinates. Free translations belong to neither set.
FreeConstrainedSplit free_constrained_split(const SkeletalModel& model);

constexpr double kDegPerRad = 57.29577951308232087680;
inline double deg_from_rad(double r) { return r * kDegPerRad; }
inline double rad_from_deg(double d) { return d / kDegPerRad; }

}  // namespace kinefit
