#pragma once

#include <string>
#include <vector>

#include "kinefit/camera.hpp"
#include "kinefit/fitting.hpp"
#include "kinefit/kinematics.hpp"
#include "kinefit/model.hpp"

namespace kinefit {

/// Deterministic shortest-ish decimal formatting used by every writer.
std::string format_double(double v, int digits = 12);

// Motion CSV: header "time,<coordinate names...>", one row per frame, time in
// seconds. Rotations are stored in degrees, translations in meters.
void write_motion_csv(const std::string& path, const MotionSequence& motion,
                      const SkeletalModel& model);
MotionSequence read_motion_csv(const std::string& path, const SkeletalModel& model);

// Scales CSV: header "segment,sx,sy,sz", one row per segment in model order.
void write_scales_csv(const std::string& path, const ScaleSet& scales,
                      const SkeletalModel& model);
ScaleSet read_scales_csv(const std::string& path, const SkeletalModel& model);

// 2D keypoint CSV per view: "frame,label,u,v,confidence" in frame-major order.
void write_keypoints2d_csv(const std::string& path, const ViewTrack2d& track);
ViewTrack2d read_keypoints2d_csv(const std::string& path);

/// Labeled 3D point tracks (markers or keypoints), one labeled point per row:
/// "frame,label,x,y,z".
struct PointTracks {
  std::vector<std::string> labels;
  std::vector<MatrixX3d> frames;  // one labels-x-3 matrix per frame

  int frame_count() const { return static_cast<int>(frames.size()); }
};
void write_points3d_csv(const std::string& path, const PointTracks& tracks);
PointTracks read_points3d_csv(const std::string& path);

// Camera files: structured-text records of the Camera fields.
void write_camera_file(const std::string& path, const Camera& cam);
Camera read_camera_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

/// Minimal standalone SVG line plot (one polyline per series).
void write_svg_traces(const std::string& path, const std::string& title,
                      const Eigen::VectorXd& x, const std::vector<Eigen::VectorXd>& series,
                      const std::vector<std::string>& series_labels);

}  // namespace kinefit
