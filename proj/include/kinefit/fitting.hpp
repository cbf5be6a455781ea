#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kinefit/camera.hpp"
#include "kinefit/kinematics.hpp"
#include "kinefit/model.hpp"

namespace kinefit {

enum class LimitMode { Project, Penalty };

struct IKSettings {
  int max_iterations = 100;
  double damping_init = 1e-3;       // Levenberg-Marquardt damping seed
  double convergence_tol = 1e-8;    // on the accepted step norm
  LimitMode limit_mode = LimitMode::Project;
  double penalty_weight = 1e3;      // quadratic range penalty (Penalty mode)
  double scale_regularization = 0;  // pull toward unit scales in fit_scales
};

struct ScaleFitResult {
  ScaleSet scales;
  Pose static_pose;
  double rms_m = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Joint static-trial optimization of per-segment scale factors and the static
/// pose against measured marker (or keypoint) positions. Scale factors are
/// kept inside [0.5, 2.0].
ScaleFitResult fit_scales(const SkeletalModel& model, const LabeledPoints& static_markers,
                          const Pose& static_pose_guess, const IKSettings& settings = {});

struct IKFrameResult {
  Pose pose;
  double rms_m = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped least-squares fit of all coordinates to labeled target points
/// (marker or keypoint labels). Constrained coordinates respect their ranges
/// per the configured limit mode.
IKFrameResult inverse_kinematics_frame(const SkeletalModel& model, const ScaleSet& scales,
                                       const LabeledPoints& targets, const Pose& init,
                                       const IKSettings& settings = {});

struct IKSequenceResult {
  MotionSequence motion;
  std::vector<double> frame_rms_m;
  int non_converged_frames = 0;
};

/// Sequential per-frame IK; frame 0 starts from the model default pose and
/// each later frame warm-starts from its predecessor.
IKSequenceResult inverse_kinematics_sequence(const SkeletalModel& model, const ScaleSet& scales,
                                             const std::vector<LabeledPoints>& target_sequence,
                                             double frame_rate, const IKSettings& settings = {});

/// Zero-phase (forward-backward) Butterworth low pass, applied per column.
Eigen::MatrixXd butterworth_lowpass(const Eigen::MatrixXd& series, double cutoff_hz,
                                    double sample_rate_hz, int order = 4);

/// Single forward pass, exposed for frequency-response characterization.
Eigen::VectorXd butterworth_forward(const Eigen::VectorXd& series, double cutoff_hz,
                                    double sample_rate_hz, int order = 4);

/// Per-view 2D keypoint tracks; all matrices are frames x labels.
struct ViewTrack2d {
  std::vector<std::string> labels;
  Eigen::MatrixXd u;
  Eigen::MatrixXd v;
  Eigen::MatrixXd confidence;

  int frame_count() const { return static_cast<int>(u.rows()); }
  int label_count() const { return static_cast<int>(labels.size()); }
};

struct ReconstructionSettings {
  IKSettings ik;
  double confidence_threshold = 0.3;
  double filter_cutoff_hz = 6.0;
  int filter_order = 4;
  int max_gap_frames = 5;  // longer gaps are an error
  double frame_rate = 60.0;
};

struct ReconstructionReport {
  int frames = 0;
  int observations_used = 0;
  int observations_dropped = 0;
  int gaps_interpolated = 0;
  double triangulation_mean_residual_px = 0.0;
  double triangulation_max_residual_px = 0.0;
  double filter_cutoff_hz = 0.0;
  int static_frame_index = 0;
  double scale_fit_rms_m = 0.0;
  bool scale_fit_converged = false;
  double ik_mean_rms_m = 0.0;
  double ik_max_rms_m = 0.0;
  int ik_non_converged_frames = 0;

  std::string to_text() const;
};

struct ReconstructionResult {
  ScaleSet scales;
  MotionSequence motion;
  ReconstructionReport report;
};

/// The multi-step pipeline: per-frame two-view triangulation of labeled 2D
/// keypoints, confidence gating with short-gap interpolation, zero-phase
/// Butterworth smoothing of the 3D tracks, static-frame scale fitting, then
/// sequential inverse kinematics.
ReconstructionResult reconstruct_sequence(const SkeletalModel& model, const Camera& cam_a,
                                          const Camera& cam_b, const ViewTrack2d& keypoints_2d_a,
                                          const ViewTrack2d& keypoints_2d_b,
                                          int static_frame_index,
                                          const ReconstructionSettings& settings = {});

}  // namespace kinefit
