#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "kinefit/model.hpp"

namespace kinefit {

using MatrixX3d = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// Coordinate values for one frame, ordered as SkeletalModel::coordinates.
struct Pose {
  Eigen::VectorXd values;

  Pose() = default;
  explicit Pose(Eigen::VectorXd v) : values(std::move(v)) {}
};

Pose default_pose(const SkeletalModel& model);

/// A clip of poses; one row per frame.
struct MotionSequence {
  Eigen::MatrixXd values;  // T x J
  double frame_rate = 60.0;

  int frame_count() const { return static_cast<int>(values.rows()); }
  Pose pose(int t) const { return Pose(values.row(t).transpose()); }
};

/// World positions of the model keypoints, rows ordered as keypoint_labels().
struct KeypointSet {
  MatrixX3d positions;
};

struct LabeledPoints {
  std::vector<std::string> labels;
  MatrixX3d positions;

  int count() const { return static_cast<int>(positions.rows()); }
};

enum class Wrt { Coordinates, Scales };

/// A point rigidly attached to a segment frame; its local offset is scaled
/// componentwise by that segment's scale factors. Joint centers, mass centers
/// and markers are all attached points.
struct AttachedPoint {
  int frame_segment = -1;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

/// Keypoint attachment list: joint centers (attached to the parent frame via
/// the joint offset), then mass centers, both in segment order.
std::vector<AttachedPoint> keypoint_attachments(const SkeletalModel& model);

/// World transform of every segment frame for the given pose and scales.
std::vector<Eigen::Isometry3d> segment_world_transforms(const SkeletalModel& model,
                                                        const Pose& pose,
                                                        const ScaleSet& scales);

MatrixX3d attached_points_world(const SkeletalModel& model, const Pose& pose,
                                const ScaleSet& scales,
                                const std::vector<AttachedPoint>& points);

/// Analytic Jacobian of the flattened point positions (3 rows per point,
/// x/y/z) with respect to all coordinates (n = J) or all scale factors
/// (n = 3B, segment-major).
Eigen::MatrixXd attached_points_jacobian(const SkeletalModel& model, const Pose& pose,
                                         const ScaleSet& scales,
                                         const std::vector<AttachedPoint>& points, Wrt wrt);

KeypointSet forward_kinematics(const SkeletalModel& model, const Pose& pose,
                               const ScaleSet& scales);

LabeledPoints marker_positions(const SkeletalModel& model, const Pose& pose,
                               const ScaleSet& scales);

Eigen::MatrixXd jacobian_keypoints(const SkeletalModel& model, const Pose& pose,
                                   const ScaleSet& scales, Wrt wrt);

/// Expresses keypoints relative to the root joint center; the root keypoint
/// maps to the origin.
KeypointSet root_relative(const KeypointSet& keypoints, const SkeletalModel& model);

}  // namespace kinefit
