#pragma once

#include <string>
#include <vector>

#include "kinefit/kinematics.hpp"
#include "kinefit/model.hpp"

namespace kinefit {

/// Mean absolute joint-angle error in degrees over the coordinate subset,
/// with differences wrapped to (-pi, pi] before taking absolute values.
double mae_angle(const MotionSequence& pred, const MotionSequence& truth,
                 const std::vector<int>& coord_subset);

/// Per-frame similarity-aligned mean per-joint position error in millimeters.
/// Both clouds are taken relative to their root keypoint before alignment.
double pa_mpjpe(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& truth,
                int root_index, bool per_frame_alignment = true);

/// Mean per-joint velocity error in mm/s: forward differences of the aligned
/// root-relative keypoints, scaled by the frame rate.
double mpjve(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& truth,
             int root_index, double frame_rate, bool per_frame_alignment = true);

struct ClipMetrics {
  std::string clip;
  double mae_angle_deg = 0.0;
  double pa_mpjpe_mm = 0.0;
  double mpjve_mm_s = 0.0;
};

struct EvaluationReport {
  std::vector<ClipMetrics> clips;

  ClipMetrics dataset_mean() const;
  std::string to_text() const;
  std::string to_csv() const;  // columns: clip, MAE_angle_deg, PA_MPJPE_mm, MPJVE_mm_s
  static EvaluationReport from_csv(const std::string& csv_text);
};

/// All three metrics for one clip: angle error over every rotational
/// coordinate plus keypoint metrics through forward kinematics.
ClipMetrics evaluate_clip(const SkeletalModel& model, const std::string& clip_name,
                          const MotionSequence& pred_motion, const ScaleSet& pred_scales,
                          const MotionSequence& truth_motion, const ScaleSet& truth_scales);

}  // namespace kinefit
