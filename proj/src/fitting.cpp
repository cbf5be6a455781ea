#include "kinefit/fitting.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <complex>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

namespace kinefit {

// ---- Levenberg-Marquardt core -------------------------------------------------

namespace {

struct LmResult {
  Eigen::VectorXd params;
  double rms = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Damped least squares with multiplicative damping (x10 on reject, /10 on
// accept) and diagonal Marquardt scaling. `project` clamps a trial parameter
// vector in place; `residuals` fills r and optionally the Jacobian.
LmResult levenberg_marquardt(
    const std::function<void(const Eigen::VectorXd&, Eigen::VectorXd*, Eigen::MatrixXd*)>& residuals,
    const std::function<void(Eigen::VectorXd*)>& project, const Eigen::VectorXd& x0,
    const IKSettings& settings) {
  Eigen::VectorXd x = x0;
  if (project) project(&x);

  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  residuals(x, &r, &jac);
  double cost = r.squaredNorm();
  double lambda = settings.damping_init;

  LmResult out;
  out.converged = false;
  int it = 0;
  for (; it < settings.max_iterations; ++it) {
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    Eigen::VectorXd diag = jtj.diagonal().cwiseMax(1e-12);

    bool accepted = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * diag;
      Eigen::VectorXd step = damped.ldlt().solve(-jtr);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      Eigen::VectorXd trial = x + step;
      if (project) project(&trial);
      const Eigen::VectorXd effective = trial - x;

      if (effective.norm() < settings.convergence_tol) {
        x = trial;
        residuals(x, &r, nullptr);
        cost = std::min(cost, r.squaredNorm());
        out.converged = true;
        accepted = true;
        break;
      }

      Eigen::VectorXd r_trial;
      residuals(trial, &r_trial, nullptr);
      const double trial_cost = r_trial.squaredNorm();
      if (trial_cost < cost) {
        // Accepted iterations never increase the objective.
        assert(trial_cost <= cost);
        x = trial;
        cost = trial_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        residuals(x, &r, &jac);
        accepted = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
    if (out.converged) {
      ++it;
      break;
    }
    if (!accepted) break;  // damping exhausted; return the best iterate
  }

  out.params = x;
  out.iterations = std::max(it, 1);
  out.rms = std::sqrt(cost / std::max<Eigen::Index>(1, r.size()));
  return out;
}

std::vector<AttachedPoint> resolve_targets(const SkeletalModel& model,
                                           const std::vector<std::string>& labels) {
  std::vector<AttachedPoint> points;
  points.reserve(labels.size());
  const auto keypoints = model.keypoint_labels();
  const auto attachments = keypoint_attachments(model);
  for (const auto& label : labels) {
    const int mk = model.marker_index(label);
    if (mk >= 0) {
      points.push_back({model.markers[mk].segment, model.markers[mk].offset});
      continue;
    }
    const auto it = std::find(keypoints.begin(), keypoints.end(), label);
    if (it == keypoints.end())
      fail(ErrorKind::Usage, "target label '" + label + "' is neither a marker nor a keypoint");
    points.push_back(attachments[it - keypoints.begin()]);
  }
  return points;
}

// Segment a target constrains, for the marker-coverage precondition.
int target_segment(const SkeletalModel& model, const std::string& label) {
  const int mk = model.marker_index(label);
  if (mk >= 0) return model.markers[mk].segment;
  const auto keypoints = model.keypoint_labels();
  const auto it = std::find(keypoints.begin(), keypoints.end(), label);
  const int idx = static_cast<int>(it - keypoints.begin());
  return idx < model.segment_count() ? idx : idx - model.segment_count();
}

void check_chain_coverage(const SkeletalModel& model, const std::vector<std::string>& labels) {
  std::vector<int> per_segment(model.segment_count(), 0);
  for (const auto& label : labels) per_segment[target_segment(model, label)]++;

  std::vector<char> has_child(model.segment_count(), 0);
  for (const auto& seg : model.segments)
    if (seg.parent >= 0) has_child[seg.parent] = 1;

  for (int leaf = 0; leaf < model.segment_count(); ++leaf) {
    if (has_child[leaf]) continue;
    int count = 0;
    for (int s = leaf; s >= 0; s = model.segments[s].parent) count += per_segment[s];
    if (count < 3)
      fail(ErrorKind::Usage, "insufficient markers: chain ending at segment '" +
                                 model.segments[leaf].name + "' has only " +
                                 std::to_string(count) + " target(s); need 3 or enable "
                                 "scale regularization");
  }
}

void clamp_pose_to_ranges(const SkeletalModel& model, Eigen::VectorXd* pose) {
  for (int c = 0; c < model.coordinate_count(); ++c) {
    const auto& range = model.coordinates[c].range;
    if (range) (*pose)[c] = std::clamp((*pose)[c], range->first, range->second);
  }
}

// Range-penalty residual rows (Penalty mode): sqrt(w) * violation per
// constrained coordinate.
void append_penalty(const SkeletalModel& model, const Eigen::VectorXd& pose, double weight,
                    Eigen::VectorXd* r, Eigen::MatrixXd* jac, int row0, int col0) {
  const double sw = std::sqrt(weight);
  int row = row0;
  for (int c = 0; c < model.coordinate_count(); ++c) {
    const auto& range = model.coordinates[c].range;
    if (!range) continue;
    double viol = 0.0, dir = 0.0;
    if (pose[c] > range->second) {
      viol = pose[c] - range->second;
      dir = 1.0;
    } else if (pose[c] < range->first) {
      viol = pose[c] - range->first;
      dir = 1.0;
    }
    (*r)[row] = sw * viol;
    if (jac) (*jac)(row, col0 + c) = sw * dir;
    ++row;
  }
}

int constrained_count(const SkeletalModel& model) {
  int n = 0;
  for (const auto& c : model.coordinates)
    if (c.range) ++n;
  return n;
}

}  // namespace

// ---- scale fitting -------------------------------------------------------------

ScaleFitResult fit_scales(const SkeletalModel& model, const LabeledPoints& static_markers,
                          const Pose& static_pose_guess, const IKSettings& settings) {
  if (static_markers.count() == 0) fail(ErrorKind::Usage, "fit_scales: no markers given");
  if (static_pose_guess.values.size() != model.coordinate_count())
    fail(ErrorKind::Dimension, "fit_scales: pose guess length mismatch");
  if (settings.scale_regularization <= 0.0)
    check_chain_coverage(model, static_markers.labels);

  const std::vector<AttachedPoint> points = resolve_targets(model, static_markers.labels);
  const int j = model.coordinate_count();
  const int b = model.segment_count();
  const int m = static_markers.count();
  const int penalty_rows =
      settings.limit_mode == LimitMode::Penalty ? constrained_count(model) : 0;
  const int reg_rows = settings.scale_regularization > 0 ? 3 * b : 0;
  const double sreg = std::sqrt(std::max(0.0, settings.scale_regularization));

  auto unpack = [&](const Eigen::VectorXd& params, Pose* pose, ScaleSet* scales) {
    pose->values = params.head(j);
    scales->factors.resize(b, 3);
    for (int s = 0; s < b; ++s)
      for (int a = 0; a < 3; ++a) scales->factors(s, a) = params[j + 3 * s + a];
  };

  auto residuals = [&](const Eigen::VectorXd& params, Eigen::VectorXd* r, Eigen::MatrixXd* jac) {
    Pose pose;
    ScaleSet scales;
    unpack(params, &pose, &scales);
    const MatrixX3d world = attached_points_world(model, pose, scales, points);

    r->resize(3 * m + penalty_rows + reg_rows);
    if (jac) *jac = Eigen::MatrixXd::Zero(r->size(), params.size());
    for (int i = 0; i < m; ++i)
      r->segment<3>(3 * i) = (world.row(i) - static_markers.positions.row(i)).transpose();
    if (jac) {
      jac->block(0, 0, 3 * m, j) =
          attached_points_jacobian(model, pose, scales, points, Wrt::Coordinates);
      jac->block(0, j, 3 * m, 3 * b) =
          attached_points_jacobian(model, pose, scales, points, Wrt::Scales);
    }
    if (penalty_rows)
      append_penalty(model, pose.values, settings.penalty_weight, r, jac, 3 * m, 0);
    if (reg_rows)
      for (int i = 0; i < 3 * b; ++i) {
        (*r)[3 * m + penalty_rows + i] = sreg * (params[j + i] - 1.0);
        if (jac) (*jac)(3 * m + penalty_rows + i, j + i) = sreg;
      }
  };

  auto project = [&](Eigen::VectorXd* params) {
    Eigen::VectorXd pose = params->head(j);
    if (settings.limit_mode == LimitMode::Project) clamp_pose_to_ranges(model, &pose);
    params->head(j) = pose;
    for (int i = 0; i < 3 * b; ++i)
      (*params)[j + i] = std::clamp((*params)[j + i], 0.5, 2.0);
  };

  Eigen::VectorXd x0(j + 3 * b);
  x0.head(j) = static_pose_guess.values;
  x0.tail(3 * b).setOnes();

  const LmResult lm = levenberg_marquardt(residuals, project, x0, settings);

  ScaleFitResult out;
  unpack(lm.params, &out.static_pose, &out.scales);
  out.iterations = lm.iterations;
  out.converged = lm.converged;
  // Marker RMS only (penalty/regularization rows excluded).
  Pose pose;
  ScaleSet scales;
  unpack(lm.params, &pose, &scales);
  const MatrixX3d world = attached_points_world(model, pose, scales, points);
  out.rms_m = std::sqrt((world - static_markers.positions).rowwise().squaredNorm().mean());
  return out;
}

// ---- inverse kinematics ---------------------------------------------------------

IKFrameResult inverse_kinematics_frame(const SkeletalModel& model, const ScaleSet& scales,
                                       const LabeledPoints& targets, const Pose& init,
                                       const IKSettings& settings) {
  if (targets.count() == 0) fail(ErrorKind::Usage, "inverse_kinematics_frame: no targets");
  if (init.values.size() != model.coordinate_count())
    fail(ErrorKind::Dimension, "inverse_kinematics_frame: init pose length mismatch");

  const std::vector<AttachedPoint> points = resolve_targets(model, targets.labels);
  const int m = targets.count();
  const int penalty_rows =
      settings.limit_mode == LimitMode::Penalty ? constrained_count(model) : 0;

  auto residuals = [&](const Eigen::VectorXd& params, Eigen::VectorXd* r, Eigen::MatrixXd* jac) {
    const Pose pose{params};
    const MatrixX3d world = attached_points_world(model, pose, scales, points);
    r->resize(3 * m + penalty_rows);
    if (jac) *jac = Eigen::MatrixXd::Zero(r->size(), params.size());
    for (int i = 0; i < m; ++i)
      r->segment<3>(3 * i) = (world.row(i) - targets.positions.row(i)).transpose();
    if (jac)
      jac->block(0, 0, 3 * m, params.size()) =
          attached_points_jacobian(model, pose, scales, points, Wrt::Coordinates);
    if (penalty_rows) append_penalty(model, params, settings.penalty_weight, r, jac, 3 * m, 0);
  };

  std::function<void(Eigen::VectorXd*)> project;
  if (settings.limit_mode == LimitMode::Project)
    project = [&](Eigen::VectorXd* p) { clamp_pose_to_ranges(model, p); };

  const LmResult lm = levenberg_marquardt(residuals, project, init.values, settings);

  IKFrameResult out;
  out.pose = Pose{lm.params};
  out.iterations = lm.iterations;
  out.converged = lm.converged;
  const MatrixX3d world = attached_points_world(model, out.pose, scales, points);
  out.rms_m = std::sqrt((world - targets.positions).rowwise().squaredNorm().mean());
  return out;
}

IKSequenceResult inverse_kinematics_sequence(const SkeletalModel& model, const ScaleSet& scales,
                                             const std::vector<LabeledPoints>& target_sequence,
                                             double frame_rate, const IKSettings& settings) {
  if (target_sequence.empty())
    fail(ErrorKind::Usage, "inverse_kinematics_sequence: empty target sequence");

  IKSequenceResult out;
  out.motion.frame_rate = frame_rate;
  out.motion.values.resize(target_sequence.size(), model.coordinate_count());
  out.frame_rms_m.resize(target_sequence.size(), 0.0);

  Pose init = default_pose(model);
  for (size_t t = 0; t < target_sequence.size(); ++t) {
    try {
      IKFrameResult frame = inverse_kinematics_frame(model, scales, target_sequence[t], init, settings);
      out.motion.values.row(t) = frame.pose.values.transpose();
      out.frame_rms_m[t] = frame.rms_m;
      if (!frame.converged) ++out.non_converged_frames;
      init = frame.pose;
    } catch (const Error& e) {
      fail(e.kind(), "frame " + std::to_string(t) + ": " + e.what());
    }
  }
  return out;
}

// ---- Butterworth smoothing -------------------------------------------------------

namespace {

struct FilterCoeffs {
  Eigen::VectorXd b;
  Eigen::VectorXd a;  // a[0] == 1
};

FilterCoeffs butterworth_design(double cutoff_hz, double sample_rate_hz, int order) {
  if (order < 1) fail(ErrorKind::Usage, "butterworth order must be >= 1");
  if (!(cutoff_hz > 0.0) || cutoff_hz >= 0.5 * sample_rate_hz)
    fail(ErrorKind::Usage, "butterworth cutoff must lie in (0, Nyquist); got " +
                               std::to_string(cutoff_hz) + " Hz at " +
                               std::to_string(sample_rate_hz) + " Hz sampling");

  // Analog prototype poles, prewarped, then mapped with the bilinear transform.
  const double fs2 = 2.0 * sample_rate_hz;
  const double warped = fs2 * std::tan(M_PI * cutoff_hz / sample_rate_hz);

  std::vector<std::complex<double>> zpoles;
  for (int k = 0; k < order; ++k) {
    const double theta = M_PI * (2.0 * k + order + 1.0) / (2.0 * order);
    const std::complex<double> s = warped * std::complex<double>(std::cos(theta), std::sin(theta));
    zpoles.push_back((fs2 + s) / (fs2 - s));
  }

  auto poly_from_roots = [](const std::vector<std::complex<double>>& roots) {
    std::vector<std::complex<double>> coeffs{1.0};
    for (const auto& r : roots) {
      std::vector<std::complex<double>> next(coeffs.size() + 1, 0.0);
      for (size_t i = 0; i < coeffs.size(); ++i) {
        next[i] += coeffs[i];
        next[i + 1] -= coeffs[i] * r;
      }
      coeffs = std::move(next);
    }
    return coeffs;
  };

  const auto apoly = poly_from_roots(zpoles);
  const auto bpoly = poly_from_roots(std::vector<std::complex<double>>(order, -1.0));

  FilterCoeffs fc;
  fc.a.resize(order + 1);
  fc.b.resize(order + 1);
  for (int i = 0; i <= order; ++i) {
    fc.a[i] = apoly[i].real();
    fc.b[i] = bpoly[i].real();
  }
  // Exact unit gain at DC: scale the numerator by A(1)/B(1).
  fc.b *= fc.a.sum() / fc.b.sum();
  return fc;
}

// Steady-state initial filter state so a step input produces no transient.
Eigen::VectorXd steady_state_zi(const FilterCoeffs& fc) {
  const int n = static_cast<int>(fc.a.size()) - 1;
  Eigen::MatrixXd sys = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i) sys(i, 0) += fc.a[i + 1];
  for (int i = 0; i + 1 < n; ++i) sys(i, i + 1) -= 1.0;
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) rhs[i] = fc.b[i + 1] - fc.a[i + 1] * fc.b[0];
  return sys.partialPivLu().solve(rhs);
}

Eigen::VectorXd lfilter(const FilterCoeffs& fc, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& zi) {
  const int n = static_cast<int>(fc.a.size()) - 1;
  Eigen::VectorXd z = zi;
  Eigen::VectorXd y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double yi = fc.b[0] * x[i] + z[0];
    for (int k = 0; k < n - 1; ++k) z[k] = fc.b[k + 1] * x[i] + z[k + 1] - fc.a[k + 1] * yi;
    z[n - 1] = fc.b[n] * x[i] - fc.a[n] * yi;
    y[i] = yi;
  }
  return y;
}

Eigen::VectorXd filtfilt_column(const FilterCoeffs& fc, const Eigen::VectorXd& x, int order) {
  const int pad = 3 * order;
  const Eigen::Index t = x.size();
  Eigen::VectorXd ext(t + 2 * pad);
  for (int i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  ext.segment(pad, t) = x;
  for (int i = 0; i < pad; ++i) ext[pad + t + i] = 2.0 * x[t - 1] - x[t - 2 - i];

  const Eigen::VectorXd zi = steady_state_zi(fc);
  Eigen::VectorXd y = lfilter(fc, ext, zi * ext[0]);
  y.reverseInPlace();
  y = lfilter(fc, y, zi * y[0]);
  y.reverseInPlace();
  return y.segment(pad, t);
}

}  // namespace

Eigen::VectorXd butterworth_forward(const Eigen::VectorXd& series, double cutoff_hz,
                                    double sample_rate_hz, int order) {
  const FilterCoeffs fc = butterworth_design(cutoff_hz, sample_rate_hz, order);
  const Eigen::VectorXd zi = steady_state_zi(fc);
  return lfilter(fc, series, zi * series[0]);
}

Eigen::MatrixXd butterworth_lowpass(const Eigen::MatrixXd& series, double cutoff_hz,
                                    double sample_rate_hz, int order) {
  const FilterCoeffs fc = butterworth_design(cutoff_hz, sample_rate_hz, order);
  if (series.rows() <= 3 * order)
    fail(ErrorKind::Usage, "series too short to filter: " + std::to_string(series.rows()) +
                               " samples for order " + std::to_string(order));
  Eigen::MatrixXd out(series.rows(), series.cols());
  for (Eigen::Index c = 0; c < series.cols(); ++c)
    out.col(c) = filtfilt_column(fc, series.col(c), order);
  return out;
}

// ---- reconstruction pipeline ------------------------------------------------------

std::string ReconstructionReport::to_text() const {
  std::ostringstream os;
  os << "frames " << frames << "\n";
  os << "observations_used " << observations_used << "\n";
  os << "observations_dropped " << observations_dropped << "\n";
  os << "gaps_interpolated " << gaps_interpolated << "\n";
  os << "triangulation_mean_residual_px " << triangulation_mean_residual_px << "\n";
  os << "triangulation_max_residual_px " << triangulation_max_residual_px << "\n";
  os << "filter_cutoff_hz " << filter_cutoff_hz << "\n";
  os << "static_frame_index " << static_frame_index << "\n";
  os << "scale_fit_rms_m " << scale_fit_rms_m << "\n";
  os << "scale_fit_converged " << (scale_fit_converged ? 1 : 0) << "\n";
  os << "ik_mean_rms_m " << ik_mean_rms_m << "\n";
  os << "ik_max_rms_m " << ik_max_rms_m << "\n";
  os << "ik_non_converged_frames " << ik_non_converged_frames << "\n";
  return os.str();
}

ReconstructionResult reconstruct_sequence(const SkeletalModel& model, const Camera& cam_a,
                                          const Camera& cam_b, const ViewTrack2d& keypoints_2d_a,
                                          const ViewTrack2d& keypoints_2d_b,
                                          int static_frame_index,
                                          const ReconstructionSettings& settings) {
  const int t_count = keypoints_2d_a.frame_count();
  if (t_count == 0) fail(ErrorKind::Usage, "reconstruct_sequence: empty 2D tracks");
  if (keypoints_2d_b.frame_count() != t_count)
    fail(ErrorKind::Dimension, "reconstruct_sequence: views disagree on frame count");
  if (keypoints_2d_a.labels != keypoints_2d_b.labels)
    fail(ErrorKind::Dimension, "reconstruct_sequence: views disagree on keypoint labels");
  if (static_frame_index < 0 || static_frame_index >= t_count)
    fail(ErrorKind::Usage, "reconstruct_sequence: static frame " +
                               std::to_string(static_frame_index) + " outside the clip");

  const int l_count = keypoints_2d_a.label_count();
  ReconstructionReport report;
  report.frames = t_count;
  report.filter_cutoff_hz = settings.filter_cutoff_hz;
  report.static_frame_index = static_frame_index;

  // Stage 1: triangulate confident observations.
  std::vector<Eigen::MatrixXd> tracks(3, Eigen::MatrixXd::Zero(t_count, l_count));
  Eigen::Matrix<char, Eigen::Dynamic, Eigen::Dynamic> valid(t_count, l_count);
  valid.setZero();
  double residual_sum = 0.0;
  int residual_count = 0;
  for (int t = 0; t < t_count; ++t) {
    for (int l = 0; l < l_count; ++l) {
      if (keypoints_2d_a.confidence(t, l) < settings.confidence_threshold ||
          keypoints_2d_b.confidence(t, l) < settings.confidence_threshold) {
        ++report.observations_dropped;
        continue;
      }
      const TriangulationResult tri = triangulate_two_view(
          cam_a, cam_b, Eigen::Vector2d(keypoints_2d_a.u(t, l), keypoints_2d_a.v(t, l)),
          Eigen::Vector2d(keypoints_2d_b.u(t, l), keypoints_2d_b.v(t, l)));
      for (int a = 0; a < 3; ++a) tracks[a](t, l) = tri.point[a];
      valid(t, l) = 1;
      ++report.observations_used;
      residual_sum += tri.residual_px;
      report.triangulation_max_residual_px =
          std::max(report.triangulation_max_residual_px, tri.residual_px);
      ++residual_count;
    }
  }
  if (residual_count) report.triangulation_mean_residual_px = residual_sum / residual_count;

  for (int t = 0; t < t_count; ++t) {
    bool any = false;
    for (int l = 0; l < l_count; ++l) any |= valid(t, l) != 0;
    if (!any)
      fail(ErrorKind::Numeric, "missing data: no observation above the confidence threshold "
                               "at frame " + std::to_string(t));
  }

  // Stage 2: close short gaps per keypoint track (linear interpolation,
  // nearest-value extension at the clip edges).
  for (int l = 0; l < l_count; ++l) {
    int prev = -1;
    for (int t = 0; t <= t_count; ++t) {
      const bool end = t == t_count;
      if (!end && !valid(t, l)) continue;
      const int gap = (end ? t_count : t) - prev - 1;
      if (gap > 0) {
        if (gap > settings.max_gap_frames)
          fail(ErrorKind::Numeric, "gap of " + std::to_string(gap) + " frames in keypoint '" +
                                       keypoints_2d_a.labels[l] + "' starting at frame " +
                                       std::to_string(prev + 1) + " exceeds the limit of " +
                                       std::to_string(settings.max_gap_frames));
        for (int g = prev + 1; g < (end ? t_count : t); ++g) {
          for (int a = 0; a < 3; ++a) {
            if (prev < 0)
              tracks[a](g, l) = tracks[a](t, l);  // leading gap: hold first value
            else if (end)
              tracks[a](g, l) = tracks[a](prev, l);  // trailing gap: hold last value
            else {
              const double w = static_cast<double>(g - prev) / (t - prev);
              tracks[a](g, l) = (1.0 - w) * tracks[a](prev, l) + w * tracks[a](t, l);
            }
          }
          ++report.gaps_interpolated;
        }
      }
      prev = end ? prev : t;
    }
  }

  // Stage 3: zero-phase smoothing of each 3D coordinate track.
  for (int a = 0; a < 3; ++a)
    tracks[a] = butterworth_lowpass(tracks[a], settings.filter_cutoff_hz, settings.frame_rate,
                                    settings.filter_order);

  auto frame_points = [&](int t) {
    LabeledPoints pts;
    pts.labels = keypoints_2d_a.labels;
    pts.positions.resize(l_count, 3);
    for (int l = 0; l < l_count; ++l)
      for (int a = 0; a < 3; ++a) pts.positions(l, a) = tracks[a](t, l);
    return pts;
  };

  // Stage 4: static-trial scale fit.
  const ScaleFitResult scale_fit =
      fit_scales(model, frame_points(static_frame_index), default_pose(model), settings.ik);
  report.scale_fit_rms_m = scale_fit.rms_m;
  report.scale_fit_converged = scale_fit.converged;

  // Stage 5: sequential IK over the whole clip.
  std::vector<LabeledPoints> targets;
  targets.reserve(t_count);
  for (int t = 0; t < t_count; ++t) targets.push_back(frame_points(t));
  const IKSequenceResult ik = inverse_kinematics_sequence(model, scale_fit.scales, targets,
                                                          settings.frame_rate, settings.ik);
  report.ik_non_converged_frames = ik.non_converged_frames;
  report.ik_mean_rms_m =
      std::accumulate(ik.frame_rms_m.begin(), ik.frame_rms_m.end(), 0.0) / t_count;
  report.ik_max_rms_m = *std::max_element(ik.frame_rms_m.begin(), ik.frame_rms_m.end());

  ReconstructionResult out;
  out.scales = scale_fit.scales;
  out.motion = ik.motion;
  out.report = report;
  return out;
}

}  // namespace kinefit
