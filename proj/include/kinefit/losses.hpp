#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "kinefit/kinematics.hpp"
#include "kinefit/model.hpp"

namespace kinefit {

struct LossWeights {
  double lambda_pos = 100.0;
};

/// Default analysis window, in frames, for batched loss evaluation over long
/// clips; callers may pass any window length.
constexpr int kDefaultLossWindowFrames = 64;

/// Angle embedded on the unit circle; sidesteps wraps and ambiguities of
/// unconstrained rotations.
struct UnitCircleAngle {
  double c = 1.0;
  double s = 0.0;

  static UnitCircleAngle from_angle(double theta) {
    return UnitCircleAngle{std::cos(theta), std::sin(theta)};
  }
  double l1_distance(const UnitCircleAngle& other) const {
    return std::abs(c - other.c) + std::abs(s - other.s);
  }
};

// ---- loss terms -------------------------------------------------------------
// The matrix arguments are trajectories with one row per frame and one column
// per coordinate of the relevant subset.

/// Mean per-frame L1 distance between unit-circle embeddings of the free
/// rotation angles.
double angle_loss_free(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

/// Mean per-frame L1 distance between raw constrained coordinate values.
double angle_loss_constrained(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

/// Range-violation penalty: for predictions at or beyond a bound, the L1
/// distance between the unit-circle embeddings of the prediction and of that
/// bound, averaged over frames. Zero everywhere strictly inside the ranges and
/// continuous at the boundaries.
double bio_constraint_loss(const Eigen::MatrixXd& pred, const Eigen::VectorXd& range_min,
                           const Eigen::VectorXd& range_max);

/// Mean per-segment L1 distance between scale factor rows.
double scale_loss(const ScaleSet& pred, const ScaleSet& truth);

/// Mean per-frame-per-keypoint L1 distance between pelvis-relative keypoint
/// positions reconstructed through forward kinematics.
double keypoint_position_loss(const SkeletalModel& model, const MotionSequence& pred_motion,
                              const ScaleSet& pred_scales, const MotionSequence& truth_motion,
                              const ScaleSet& truth_scales);

struct LossBreakdown {
  double angle_free = 0.0;
  double angle_constrained = 0.0;
  double scale = 0.0;
  double bio = 0.0;
  double position = 0.0;
  double total = 0.0;
};

LossBreakdown total_loss(const SkeletalModel& model, const MotionSequence& pred_motion,
                         const ScaleSet& pred_scales, const MotionSequence& truth_motion,
                         const ScaleSet& truth_scales, const LossWeights& weights = {});

// ---- gradients --------------------------------------------------------------

enum class LossKind { AngleFree, AngleConstrained, Bio, Scale, KeypointPosition, Total };

const char* loss_kind_name(LossKind kind);
LossKind loss_kind_from_name(const std::string& name);
std::vector<LossKind> all_loss_kinds();

struct LossInputs {
  const SkeletalModel* model = nullptr;
  MotionSequence pred_motion;
  ScaleSet pred_scales;
  MotionSequence truth_motion;
  ScaleSet truth_scales;
  LossWeights weights;
};

double evaluate_loss(LossKind kind, const LossInputs& in);

/// Analytic gradient with respect to the predicted quantities. For
/// Wrt::Coordinates the vector is T*J long (frame-major); for Wrt::Scales it
/// is 3B long (segment-major). L1 subgradients are 0 at ties.
Eigen::VectorXd loss_gradients(LossKind kind, const LossInputs& in, Wrt wrt);

// ---- finite-difference verification ------------------------------------------

struct GradCheckRow {
  std::string loss;
  int draws = 0;
  int passes = 0;
  double pass_rate = 0.0;
  double worst_rel_error = 0.0;
  bool pass = false;
};

/// Compares analytic gradients against central finite differences at random
/// off-tie draws. A draw passes when every component agrees within rel_tol;
/// a loss passes when at least pass_threshold of its draws do.
std::vector<GradCheckRow> gradient_check_suite(const SkeletalModel& model, std::uint64_t seed,
                                               int draws = 1000, double rel_tol = 1e-4,
                                               double pass_threshold = 0.99,
                                               const std::string& only_loss = "");

}  // namespace kinefit
