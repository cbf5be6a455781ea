#include "kinefit/kinematics.hpp"

#include <cmath>

namespace kinefit {

Pose default_pose(const SkeletalModel& model) {
  return Pose(model.default_pose_values());
}

namespace {

void check_inputs(const SkeletalModel& model, const Pose& pose, const ScaleSet& scales) {
  if (pose.values.size() != model.coordinate_count())
    fail(ErrorKind::Dimension,
         "pose has " + std::to_string(pose.values.size()) + " values for " +
             std::to_string(model.coordinate_count()) + " coordinates");
  if (scales.segment_count() != model.segment_count())
    fail(ErrorKind::Dimension,
         "scale set has " + std::to_string(scales.segment_count()) + " rows for " +
             std::to_string(model.segment_count()) + " segments");
  if (!pose.values.allFinite()) fail(ErrorKind::Validation, "pose contains non-finite values");
}

// Per-coordinate data produced while composing the tree, used by the
// coordinate Jacobian: a rotation contributes axis x (p - center), a root
// translation contributes its fixed world axis.
struct CoordFrame {
  bool rotational = false;
  Eigen::Vector3d axis = Eigen::Vector3d::Zero();    // world direction
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // world rotation center
  int segment = -1;
};

struct TreeState {
  std::vector<Eigen::Matrix3d> rotation;     // world rotation per segment
  std::vector<Eigen::Vector3d> origin;       // world joint center per segment
  std::vector<CoordFrame> coords;            // per global coordinate
};

TreeState compose_tree(const SkeletalModel& model, const Pose& pose, const ScaleSet& scales) {
  TreeState st;
  const int S = model.segment_count();
  st.rotation.assign(S, Eigen::Matrix3d::Identity());
  st.origin.assign(S, Eigen::Vector3d::Zero());
  st.coords.assign(model.coordinate_count(), CoordFrame{});

  // Segments are stored in file order; parents may appear after children, so
  // resolve lazily with an explicit visit loop.
  std::vector<char> done(S, 0);
  int remaining = S;
  while (remaining > 0) {
    int progressed = 0;
    for (int s = 0; s < S; ++s) {
      if (done[s]) continue;
      const BodySegment& seg = model.segments[s];
      if (seg.parent >= 0 && !done[seg.parent]) continue;

      Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
      Eigen::Vector3d o = Eigen::Vector3d::Zero();
      if (seg.parent >= 0) {
        const Eigen::Vector3d scaled =
            scales.factors.row(seg.parent).transpose().cwiseProduct(seg.joint_offset_in_parent);
        o = st.origin[seg.parent] + st.rotation[seg.parent] * scaled;
        r = st.rotation[seg.parent];
      }

      int axis_index = 0;
      int translation_index = 0;
      for (int c : seg.coordinates) {
        const Coordinate& coord = model.coordinates[c];
        CoordFrame& cf = st.coords[c];
        cf.segment = s;
        if (coord.kind == CoordKind::Translation) {
          // Root translations act along the world axes in declaration order.
          cf.rotational = false;
          cf.axis = Eigen::Vector3d::Unit(translation_index % 3);
          o += pose.values[c] * cf.axis;
          ++translation_index;
        } else {
          const Eigen::Vector3d& a = seg.rotation_axes[axis_index++];
          cf.rotational = true;
          cf.axis = r * a;
          r = r * Eigen::AngleAxisd(pose.values[c], a).toRotationMatrix();
        }
      }
      // All of this segment's rotations pivot about its joint center.
      for (int c : seg.coordinates)
        if (st.coords[c].rotational) st.coords[c].center = o;

      st.rotation[s] = r;
      st.origin[s] = o;
      done[s] = 1;
      ++progressed;
      --remaining;
    }
    if (progressed == 0)
      fail(ErrorKind::Validation, "segment tree is not a rooted tree (cycle or missing root)");
  }
  return st;
}

}  // namespace

std::vector<AttachedPoint> keypoint_attachments(const SkeletalModel& model) {
  std::vector<AttachedPoint> pts;
  pts.reserve(model.keypoint_count());
  for (int s = 0; s < model.segment_count(); ++s) {
    const BodySegment& seg = model.segments[s];
    if (seg.parent < 0)
      pts.push_back({s, Eigen::Vector3d::Zero()});
    else
      pts.push_back({seg.parent, seg.joint_offset_in_parent});
  }
  for (int s = 0; s < model.segment_count(); ++s)
    pts.push_back({s, model.segments[s].mass_center_offset});
  return pts;
}

std::vector<Eigen::Isometry3d> segment_world_transforms(const SkeletalModel& model,
                                                        const Pose& pose,
                                                        const ScaleSet& scales) {
  check_inputs(model, pose, scales);
  TreeState st = compose_tree(model, pose, scales);
  std::vector<Eigen::Isometry3d> out(model.segment_count());
  for (int s = 0; s < model.segment_count(); ++s) {
    out[s].setIdentity();
    out[s].linear() = st.rotation[s];
    out[s].translation() = st.origin[s];
  }
  return out;
}

MatrixX3d attached_points_world(const SkeletalModel& model, const Pose& pose,
                                const ScaleSet& scales,
                                const std::vector<AttachedPoint>& points) {
  check_inputs(model, pose, scales);
  TreeState st = compose_tree(model, pose, scales);
  MatrixX3d out(points.size(), 3);
  for (size_t i = 0; i < points.size(); ++i) {
    const AttachedPoint& p = points[i];
    const Eigen::Vector3d scaled =
        scales.factors.row(p.frame_segment).transpose().cwiseProduct(p.offset);
    out.row(i) = (st.origin[p.frame_segment] + st.rotation[p.frame_segment] * scaled).transpose();
  }
  return out;
}

Eigen::MatrixXd attached_points_jacobian(const SkeletalModel& model, const Pose& pose,
                                         const ScaleSet& scales,
                                         const std::vector<AttachedPoint>& points, Wrt wrt) {
  check_inputs(model, pose, scales);
  TreeState st = compose_tree(model, pose, scales);

  const int P = static_cast<int>(points.size());
  const int n = wrt == Wrt::Coordinates ? model.coordinate_count() : 3 * model.segment_count();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3 * P, n);

  for (int i = 0; i < P; ++i) {
    const AttachedPoint& pt = points[i];
    const Eigen::Vector3d scaled =
        scales.factors.row(pt.frame_segment).transpose().cwiseProduct(pt.offset);
    const Eigen::Vector3d world =
        st.origin[pt.frame_segment] + st.rotation[pt.frame_segment] * scaled;

    if (wrt == Wrt::Coordinates) {
      // A coordinate moves this point iff its owner segment lies on the
      // point's frame chain.
      for (int s = pt.frame_segment; s >= 0; s = model.segments[s].parent) {
        for (int c : model.segments[s].coordinates) {
          const CoordFrame& cf = st.coords[c];
          jac.block<3, 1>(3 * i, c) =
              cf.rotational ? cf.axis.cross(world - cf.center) : cf.axis;
        }
      }
    } else {
      // Direct dependence on the frame segment's own factors...
      for (int a = 0; a < 3; ++a)
        jac.block<3, 1>(3 * i, 3 * pt.frame_segment + a) +=
            st.rotation[pt.frame_segment].col(a) * pt.offset[a];
      // ...plus each chain joint offset, which the parent's factors resize.
      for (int s = pt.frame_segment; s >= 0; s = model.segments[s].parent) {
        const int parent = model.segments[s].parent;
        if (parent < 0) continue;
        const Eigen::Vector3d& off = model.segments[s].joint_offset_in_parent;
        for (int a = 0; a < 3; ++a)
          jac.block<3, 1>(3 * i, 3 * parent + a) += st.rotation[parent].col(a) * off[a];
      }
    }
  }
  return jac;
}

KeypointSet forward_kinematics(const SkeletalModel& model, const Pose& pose,
                               const ScaleSet& scales) {
  KeypointSet kp;
  kp.positions = attached_points_world(model, pose, scales, keypoint_attachments(model));
  return kp;
}

LabeledPoints marker_positions(const SkeletalModel& model, const Pose& pose,
                               const ScaleSet& scales) {
  std::vector<AttachedPoint> pts;
  pts.reserve(model.markers.size());
  LabeledPoints out;
  for (const Marker& mk : model.markers) {
    pts.push_back({mk.segment, mk.offset});
    out.labels.push_back(mk.name);
  }
  out.positions = attached_points_world(model, pose, scales, pts);
  return out;
}

Eigen::MatrixXd jacobian_keypoints(const SkeletalModel& model, const Pose& pose,
                                   const ScaleSet& scales, Wrt wrt) {
  return attached_points_jacobian(model, pose, scales, keypoint_attachments(model), wrt);
}

KeypointSet root_relative(const KeypointSet& keypoints, const SkeletalModel& model) {
  const int root = model.root_segment();
  KeypointSet out;
  out.positions = keypoints.positions.rowwise() - keypoints.positions.row(root);
  return out;
}

}  // namespace kinefit
