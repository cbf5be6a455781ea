#include "kinefit/losses.hpp"

#include <cmath>
#include <random>

namespace kinefit {

namespace {

double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    fail(ErrorKind::Dimension, std::string(what) + ": shape mismatch (" +
                                   std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                   " vs " + std::to_string(b.rows()) + "x" +
                                   std::to_string(b.cols()) + ")");
  if (a.rows() == 0) fail(ErrorKind::Dimension, std::string(what) + ": empty sequence");
}

Eigen::MatrixXd restrict_columns(const Eigen::MatrixXd& m, const std::vector<int>& cols) {
  Eigen::MatrixXd out(m.rows(), cols.size());
  for (size_t j = 0; j < cols.size(); ++j) out.col(j) = m.col(cols[j]);
  return out;
}

}  // namespace

double angle_loss_free(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  check_same_shape(pred, truth, "angle_loss_free");
  const double t = static_cast<double>(pred.rows());
  return ((pred.array().cos() - truth.array().cos()).abs() +
          (pred.array().sin() - truth.array().sin()).abs())
             .sum() /
         t;
}

double angle_loss_constrained(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  check_same_shape(pred, truth, "angle_loss_constrained");
  return (pred - truth).array().abs().sum() / static_cast<double>(pred.rows());
}

double bio_constraint_loss(const Eigen::MatrixXd& pred, const Eigen::VectorXd& range_min,
                           const Eigen::VectorXd& range_max) {
  if (pred.cols() != range_min.size() || pred.cols() != range_max.size())
    fail(ErrorKind::Dimension, "bio_constraint_loss: range vectors do not match coordinates");
  for (int c = 0; c < range_min.size(); ++c)
    if (!(range_min[c] < range_max[c]))
      fail(ErrorKind::Validation, "bio_constraint_loss: invalid range for column " +
                                      std::to_string(c));
  double sum = 0.0;
  for (int t = 0; t < pred.rows(); ++t) {
    for (int c = 0; c < pred.cols(); ++c) {
      const double v = pred(t, c);
      const auto a = UnitCircleAngle::from_angle(v);
      if (v >= range_max[c]) sum += a.l1_distance(UnitCircleAngle::from_angle(range_max[c]));
      if (v <= range_min[c]) sum += a.l1_distance(UnitCircleAngle::from_angle(range_min[c]));
    }
  }
  return sum / static_cast<double>(pred.rows());
}

double scale_loss(const ScaleSet& pred, const ScaleSet& truth) {
  if (pred.segment_count() != truth.segment_count() || pred.segment_count() == 0)
    fail(ErrorKind::Dimension, "scale_loss: segment count mismatch");
  return (pred.factors - truth.factors).array().abs().sum() /
         static_cast<double>(pred.segment_count());
}

double keypoint_position_loss(const SkeletalModel& model, const MotionSequence& pred_motion,
                              const ScaleSet& pred_scales, const MotionSequence& truth_motion,
                              const ScaleSet& truth_scales) {
  check_same_shape(pred_motion.values, truth_motion.values, "keypoint_position_loss");
  const int t_count = pred_motion.frame_count();
  const int k = model.keypoint_count();
  double sum = 0.0;
  for (int t = 0; t < t_count; ++t) {
    const KeypointSet pred =
        root_relative(forward_kinematics(model, pred_motion.pose(t), pred_scales), model);
    const KeypointSet truth =
        root_relative(forward_kinematics(model, truth_motion.pose(t), truth_scales), model);
    sum += (pred.positions - truth.positions).array().abs().sum();
  }
  return sum / (static_cast<double>(t_count) * k);
}

LossBreakdown total_loss(const SkeletalModel& model, const MotionSequence& pred_motion,
                         const ScaleSet& pred_scales, const MotionSequence& truth_motion,
                         const ScaleSet& truth_scales, const LossWeights& weights) {
  const FreeConstrainedSplit split = free_constrained_split(model);
  LossBreakdown out;
  out.angle_free = angle_loss_free(restrict_columns(pred_motion.values, split.free_rotational),
                                   restrict_columns(truth_motion.values, split.free_rotational));
  out.angle_constrained =
      angle_loss_constrained(restrict_columns(pred_motion.values, split.constrained),
                             restrict_columns(truth_motion.values, split.constrained));
  std::vector<int> bio_cols;
  for (int c : split.constrained)
    if (model.coordinates[c].kind == CoordKind::Rotation) bio_cols.push_back(c);
  Eigen::VectorXd lo(bio_cols.size()), hi(bio_cols.size());
  for (size_t j = 0; j < bio_cols.size(); ++j) {
    lo[j] = model.coordinates[bio_cols[j]].range->first;
    hi[j] = model.coordinates[bio_cols[j]].range->second;
  }
  out.bio = bio_constraint_loss(restrict_columns(pred_motion.values, bio_cols), lo, hi);
  out.scale = scale_loss(pred_scales, truth_scales);
  out.position =
      keypoint_position_loss(model, pred_motion, pred_scales, truth_motion, truth_scales);
  out.total = out.angle_free + out.angle_constrained + out.scale + out.bio +
              weights.lambda_pos * out.position;
  return out;
}

// ---- gradients --------------------------------------------------------------

namespace {

// Gradient helpers accumulate into a frame-major T*J vector (coordinates) or a
// 3B vector (scales).

void add_angle_free_gradient(const LossInputs& in, const std::vector<int>& cols,
                             Eigen::VectorXd* grad) {
  const Eigen::MatrixXd& pred = in.pred_motion.values;
  const Eigen::MatrixXd& truth = in.truth_motion.values;
  const int j = static_cast<int>(pred.cols());
  const double t_count = static_cast<double>(pred.rows());
  for (int t = 0; t < pred.rows(); ++t) {
    for (int c : cols) {
      const double p = pred(t, c), q = truth(t, c);
      const double g = sgn(std::cos(p) - std::cos(q)) * (-std::sin(p)) +
                       sgn(std::sin(p) - std::sin(q)) * std::cos(p);
      (*grad)[t * j + c] += g / t_count;
    }
  }
}

void add_angle_constrained_gradient(const LossInputs& in, const std::vector<int>& cols,
                                    Eigen::VectorXd* grad) {
  const Eigen::MatrixXd& pred = in.pred_motion.values;
  const Eigen::MatrixXd& truth = in.truth_motion.values;
  const int j = static_cast<int>(pred.cols());
  const double t_count = static_cast<double>(pred.rows());
  for (int t = 0; t < pred.rows(); ++t)
    for (int c : cols) (*grad)[t * j + c] += sgn(pred(t, c) - truth(t, c)) / t_count;
}

void add_bio_gradient(const LossInputs& in, const std::vector<int>& cols,
                      Eigen::VectorXd* grad) {
  const Eigen::MatrixXd& pred = in.pred_motion.values;
  const int j = static_cast<int>(pred.cols());
  const double t_count = static_cast<double>(pred.rows());
  for (int t = 0; t < pred.rows(); ++t) {
    for (int c : cols) {
      const auto& range = in.model->coordinates[c].range;
      const double v = pred(t, c);
      double g = 0.0;
      if (v >= range->second)
        g += sgn(std::cos(v) - std::cos(range->second)) * (-std::sin(v)) +
             sgn(std::sin(v) - std::sin(range->second)) * std::cos(v);
      if (v <= range->first)
        g += sgn(std::cos(v) - std::cos(range->first)) * (-std::sin(v)) +
             sgn(std::sin(v) - std::sin(range->first)) * std::cos(v);
      (*grad)[t * j + c] += g / t_count;
    }
  }
}

void add_scale_gradient(const LossInputs& in, Eigen::VectorXd* grad) {
  const double b = static_cast<double>(in.pred_scales.segment_count());
  for (int s = 0; s < in.pred_scales.segment_count(); ++s)
    for (int a = 0; a < 3; ++a)
      (*grad)[3 * s + a] +=
          sgn(in.pred_scales.factors(s, a) - in.truth_scales.factors(s, a)) / b;
}

void add_position_gradient(const LossInputs& in, Wrt wrt, double weight, Eigen::VectorXd* grad) {
  const SkeletalModel& model = *in.model;
  const int t_count = in.pred_motion.frame_count();
  const int k = model.keypoint_count();
  const int j = model.coordinate_count();
  const int root = model.root_segment();
  const double norm = weight / (static_cast<double>(t_count) * k);

  for (int t = 0; t < t_count; ++t) {
    const Pose pred_pose = in.pred_motion.pose(t);
    const KeypointSet pred =
        root_relative(forward_kinematics(model, pred_pose, in.pred_scales), model);
    const KeypointSet truth = root_relative(
        forward_kinematics(model, in.truth_motion.pose(t), in.truth_scales), model);

    Eigen::VectorXd sign_vec(3 * k);
    for (int i = 0; i < k; ++i)
      for (int a = 0; a < 3; ++a)
        sign_vec[3 * i + a] = sgn(pred.positions(i, a) - truth.positions(i, a));

    Eigen::MatrixXd jac = jacobian_keypoints(model, pred_pose, in.pred_scales, wrt);
    // Pelvis-relative positions: subtract the root keypoint's rows.
    const Eigen::MatrixXd root_rows = jac.middleRows(3 * root, 3);
    for (int i = 0; i < k; ++i) jac.middleRows(3 * i, 3) -= root_rows;

    const Eigen::VectorXd g = norm * (jac.transpose() * sign_vec);
    if (wrt == Wrt::Coordinates)
      grad->segment(t * j, j) += g;
    else
      *grad += g;
  }
}

void check_inputs(const LossInputs& in) {
  if (!in.model) fail(ErrorKind::Usage, "loss inputs missing a model");
  check_same_shape(in.pred_motion.values, in.truth_motion.values, "loss inputs");
  if (in.pred_motion.values.cols() != in.model->coordinate_count())
    fail(ErrorKind::Dimension, "loss motion does not match model coordinate count");
  if (in.pred_scales.segment_count() != in.model->segment_count() ||
      in.truth_scales.segment_count() != in.model->segment_count())
    fail(ErrorKind::Dimension, "loss scales do not match model segment count");
}

std::vector<int> bio_columns(const SkeletalModel& model, const FreeConstrainedSplit& split) {
  std::vector<int> cols;
  for (int c : split.constrained)
    if (model.coordinates[c].kind == CoordKind::Rotation) cols.push_back(c);
  return cols;
}

}  // namespace

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::AngleFree: return "angle_free";
    case LossKind::AngleConstrained: return "angle_constrained";
    case LossKind::Bio: return "bio";
    case LossKind::Scale: return "scale";
    case LossKind::KeypointPosition: return "position";
    case LossKind::Total: return "total";
  }
  return "?";
}

LossKind loss_kind_from_name(const std::string& name) {
  for (LossKind k : all_loss_kinds())
    if (name == loss_kind_name(k)) return k;
  fail(ErrorKind::Usage, "unknown loss '" + name +
                             "' (expected angle_free, angle_constrained, bio, scale, position "
                             "or total)");
}

std::vector<LossKind> all_loss_kinds() {
  return {LossKind::AngleFree, LossKind::AngleConstrained, LossKind::Bio,
          LossKind::Scale,     LossKind::KeypointPosition, LossKind::Total};
}

double evaluate_loss(LossKind kind, const LossInputs& in) {
  check_inputs(in);
  const FreeConstrainedSplit split = free_constrained_split(*in.model);
  switch (kind) {
    case LossKind::AngleFree:
      return angle_loss_free(restrict_columns(in.pred_motion.values, split.free_rotational),
                             restrict_columns(in.truth_motion.values, split.free_rotational));
    case LossKind::AngleConstrained:
      return angle_loss_constrained(restrict_columns(in.pred_motion.values, split.constrained),
                                    restrict_columns(in.truth_motion.values, split.constrained));
    case LossKind::Bio: {
      const std::vector<int> cols = bio_columns(*in.model, split);
      Eigen::VectorXd lo(cols.size()), hi(cols.size());
      for (size_t i = 0; i < cols.size(); ++i) {
        lo[i] = in.model->coordinates[cols[i]].range->first;
        hi[i] = in.model->coordinates[cols[i]].range->second;
      }
      return bio_constraint_loss(restrict_columns(in.pred_motion.values, cols), lo, hi);
    }
    case LossKind::Scale:
      return scale_loss(in.pred_scales, in.truth_scales);
    case LossKind::KeypointPosition:
      return keypoint_position_loss(*in.model, in.pred_motion, in.pred_scales, in.truth_motion,
                                    in.truth_scales);
    case LossKind::Total:
      return total_loss(*in.model, in.pred_motion, in.pred_scales, in.truth_motion,
                        in.truth_scales, in.weights)
          .total;
  }
  fail(ErrorKind::Usage, "unknown loss kind");
}

Eigen::VectorXd loss_gradients(LossKind kind, const LossInputs& in, Wrt wrt) {
  check_inputs(in);
  const SkeletalModel& model = *in.model;
  const FreeConstrainedSplit split = free_constrained_split(model);
  const int t_count = in.pred_motion.frame_count();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(
      wrt == Wrt::Coordinates ? t_count * model.coordinate_count() : 3 * model.segment_count());

  const bool want_coords = wrt == Wrt::Coordinates;
  switch (kind) {
    case LossKind::AngleFree:
      if (want_coords) add_angle_free_gradient(in, split.free_rotational, &grad);
      break;
    case LossKind::AngleConstrained:
      if (want_coords) add_angle_constrained_gradient(in, split.constrained, &grad);
      break;
    case LossKind::Bio:
      if (want_coords) add_bio_gradient(in, bio_columns(model, split), &grad);
      break;
    case LossKind::Scale:
      if (!want_coords) add_scale_gradient(in, &grad);
      break;
    case LossKind::KeypointPosition:
      add_position_gradient(in, wrt, 1.0, &grad);
      break;
    case LossKind::Total:
      if (want_coords) {
        add_angle_free_gradient(in, split.free_rotational, &grad);
        add_angle_constrained_gradient(in, split.constrained, &grad);
        add_bio_gradient(in, bio_columns(model, split), &grad);
      } else {
        add_scale_gradient(in, &grad);
      }
      add_position_gradient(in, wrt, in.weights.lambda_pos, &grad);
      break;
  }
  return grad;
}

// ---- finite-difference verification ------------------------------------------

namespace {

class DrawRng {
public:
  explicit DrawRng(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) {
    double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

private:
  std::mt19937_64 rng_;
};

// Distance margin that a draw must keep from every L1 tie and every range
// boundary so that central differences with step h stay one-sided.
constexpr double kTieMargin = 1e-5;
constexpr double kFdStep = 1e-7;

bool off_tie(const LossInputs& in, const FreeConstrainedSplit& split,
             const std::vector<int>& bio_cols) {
  const Eigen::MatrixXd& p = in.pred_motion.values;
  const Eigen::MatrixXd& q = in.truth_motion.values;
  for (int t = 0; t < p.rows(); ++t) {
    for (int c : split.free_rotational) {
      if (std::abs(std::cos(p(t, c)) - std::cos(q(t, c))) < kTieMargin) return false;
      if (std::abs(std::sin(p(t, c)) - std::sin(q(t, c))) < kTieMargin) return false;
    }
    for (int c : split.constrained)
      if (std::abs(p(t, c) - q(t, c)) < kTieMargin) return false;
    for (int c : bio_cols) {
      const auto& r = in.model->coordinates[c].range;
      // Keep clear of the indicator boundaries themselves...
      if (std::abs(p(t, c) - r->first) < kTieMargin) return false;
      if (std::abs(p(t, c) - r->second) < kTieMargin) return false;
      // ...and of embedding ties while a bound is active.
      if (p(t, c) >= r->second) {
        if (std::abs(std::cos(p(t, c)) - std::cos(r->second)) < kTieMargin) return false;
        if (std::abs(std::sin(p(t, c)) - std::sin(r->second)) < kTieMargin) return false;
      }
      if (p(t, c) <= r->first) {
        if (std::abs(std::cos(p(t, c)) - std::cos(r->first)) < kTieMargin) return false;
        if (std::abs(std::sin(p(t, c)) - std::sin(r->first)) < kTieMargin) return false;
      }
    }
  }
  if ((in.pred_scales.factors - in.truth_scales.factors).cwiseAbs().minCoeff() < kTieMargin)
    return false;
  // Keypoint coordinate ties are checked through the actual positions.
  for (int t = 0; t < p.rows(); ++t) {
    const KeypointSet a =
        root_relative(forward_kinematics(*in.model, in.pred_motion.pose(t), in.pred_scales),
                      *in.model);
    const KeypointSet b =
        root_relative(forward_kinematics(*in.model, in.truth_motion.pose(t), in.truth_scales),
                      *in.model);
    Eigen::MatrixXd diff = (a.positions - b.positions).cwiseAbs();
    const int root = in.model->root_segment();
    diff.row(root).setConstant(1.0);  // root keypoint is identically zero by construction
    if (diff.minCoeff() < kTieMargin) return false;
  }
  return true;
}

LossInputs random_inputs(const SkeletalModel& model, DrawRng& rng, int frames) {
  LossInputs in;
  in.model = &model;
  const int j = model.coordinate_count();
  auto random_motion = [&]() {
    MotionSequence m;
    m.values.resize(frames, j);
    for (int t = 0; t < frames; ++t) {
      for (int c = 0; c < j; ++c) {
        const Coordinate& coord = model.coordinates[c];
        if (coord.cls == CoordClass::Constrained) {
          // Cover both the interior and the violating regions around a range.
          const double lo = coord.range->first - 0.4;
          const double hi = coord.range->second + 0.4;
          m.values(t, c) = rng.uniform(lo, hi);
        } else if (coord.kind == CoordKind::Rotation) {
          m.values(t, c) = rng.uniform(-2.5, 2.5);
        } else {
          m.values(t, c) = rng.uniform(-0.5, 0.5);
        }
      }
    }
    return m;
  };
  auto random_scales = [&]() {
    ScaleSet s = ScaleSet::ones(model.segment_count());
    for (int i = 0; i < s.segment_count(); ++i)
      for (int a = 0; a < 3; ++a) s.factors(i, a) = rng.uniform(0.7, 1.3);
    return s;
  };
  in.pred_motion = random_motion();
  in.truth_motion = random_motion();
  in.truth_motion.frame_rate = in.pred_motion.frame_rate;
  in.pred_scales = random_scales();
  in.truth_scales = random_scales();
  return in;
}

double perturbed_loss(LossKind kind, LossInputs& in, Wrt wrt, int index, double delta) {
  const int j = in.model->coordinate_count();
  if (wrt == Wrt::Coordinates) {
    const int t = index / j, c = index % j;
    in.pred_motion.values(t, c) += delta;
    const double v = evaluate_loss(kind, in);
    in.pred_motion.values(t, c) -= delta;
    return v;
  }
  const int s = index / 3, a = index % 3;
  in.pred_scales.factors(s, a) += delta;
  const double v = evaluate_loss(kind, in);
  in.pred_scales.factors(s, a) -= delta;
  return v;
}

}  // namespace

std::vector<GradCheckRow> gradient_check_suite(const SkeletalModel& model, std::uint64_t seed,
                                               int draws, double rel_tol, double pass_threshold,
                                               const std::string& only_loss) {
  std::vector<GradCheckRow> rows;
  const FreeConstrainedSplit split = free_constrained_split(model);
  const std::vector<int> bio_cols = bio_columns(model, split);
  constexpr int kFrames = 3;

  for (LossKind kind : all_loss_kinds()) {
    if (!only_loss.empty() && only_loss != loss_kind_name(kind)) continue;
    GradCheckRow row;
    row.loss = loss_kind_name(kind);
    row.draws = draws;
    DrawRng rng(seed ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(kind) + 1)));

    for (int d = 0; d < draws; ++d) {
      LossInputs in = random_inputs(model, rng, kFrames);
      for (int tries = 0; tries < 64 && !off_tie(in, split, bio_cols); ++tries)
        in = random_inputs(model, rng, kFrames);

      bool draw_ok = true;
      double worst = 0.0;
      for (Wrt wrt : {Wrt::Coordinates, Wrt::Scales}) {
        const Eigen::VectorXd analytic = loss_gradients(kind, in, wrt);
        for (int i = 0; i < analytic.size(); ++i) {
          const double plus = perturbed_loss(kind, in, wrt, i, kFdStep);
          const double minus = perturbed_loss(kind, in, wrt, i, -kFdStep);
          const double fd = (plus - minus) / (2.0 * kFdStep);
          const double rel =
              std::abs(analytic[i] - fd) / std::max({std::abs(analytic[i]), std::abs(fd), 1.0});
          worst = std::max(worst, rel);
          if (rel > rel_tol) draw_ok = false;
        }
      }
      row.worst_rel_error = std::max(row.worst_rel_error, worst);
      if (draw_ok) ++row.passes;
    }
    row.pass_rate = static_cast<double>(row.passes) / std::max(1, row.draws);
    row.pass = row.pass_rate >= pass_threshold;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace kinefit
