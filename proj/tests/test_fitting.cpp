#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "kinefit/fitting.hpp"
#include "kinefit/model.hpp"
#include "kinefit/synthgen.hpp"

using namespace kinefit;

namespace {

const std::string kGenericModel = std::string(KINEFIT_DATA_DIR) + "/generic.kmodel";

struct Draw {
  std::mt19937_64 rng;
  explicit Draw(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) {
    return lo + (static_cast<double>(rng() >> 11) * 0x1.0p-53) * (hi - lo);
  }
  double gaussian() {
    const double u1 = std::max(uniform(0, 1), 1e-300);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * uniform(0, 1));
  }
};

ScaleSet random_scales(const SkeletalModel& model, Draw& draw, double lo = 0.8, double hi = 1.2) {
  ScaleSet s = ScaleSet::ones(model.segment_count());
  for (int i = 0; i < s.segment_count(); ++i)
    for (int a = 0; a < 3; ++a) s.factors(i, a) = draw.uniform(lo, hi);
  return s;
}

LabeledPoints keypoint_targets(const SkeletalModel& model, const Pose& pose,
                               const ScaleSet& scales) {
  LabeledPoints targets;
  targets.labels = model.keypoint_labels();
  targets.positions = forward_kinematics(model, pose, scales).positions;
  return targets;
}

}  // namespace

TEST_CASE("fit_scales recovers constructed scales from clean markers") {
  const SkeletalModel model = load_model(kGenericModel);
  Draw draw(31);
  const ScaleSet truth = random_scales(model, draw);
  const Pose pose = default_pose(model);
  const LabeledPoints markers = marker_positions(model, pose, truth);

  const ScaleFitResult fit = fit_scales(model, markers, pose);
  CHECK(fit.converged);
  CHECK(fit.rms_m < 1e-5);
  CHECK((fit.scales.factors - truth.factors).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("unit-scale markers give unit scales back") {
  const SkeletalModel model = load_model(kGenericModel);
  const Pose pose = default_pose(model);
  const ScaleSet unit = ScaleSet::ones(model.segment_count());
  const LabeledPoints markers = marker_positions(model, pose, unit);
  const ScaleFitResult fit = fit_scales(model, markers, pose);
  CHECK((fit.scales.factors.array() - 1.0).abs().maxCoeff() < 1e-6);
  CHECK(fit.rms_m < 1e-7);
}

TEST_CASE("marker noise of a few centimeters lands the fit RMS in the 1-3 cm band") {
  const SkeletalModel model = load_model(kGenericModel);
  Draw draw(32);
  const ScaleSet truth = random_scales(model, draw);
  const Pose pose = default_pose(model);
  LabeledPoints markers = marker_positions(model, pose, truth);
  for (int m = 0; m < markers.count(); ++m)
    for (int a = 0; a < 3; ++a) markers.positions(m, a) += 0.02 * draw.gaussian();

  const ScaleFitResult fit = fit_scales(model, markers, pose);
  CHECK(fit.rms_m > 0.01);
  CHECK(fit.rms_m < 0.03);
}

TEST_CASE("fit_scales enforces the marker-coverage precondition") {
  const SkeletalModel model = load_model(kGenericModel);
  LabeledPoints sparse;
  sparse.labels = {"pelvis_m1", "pelvis_m2"};
  sparse.positions = MatrixX3d::Zero(2, 3);
  CHECK_THROWS_WITH_AS(fit_scales(model, sparse, default_pose(model)),
                       doctest::Contains("insufficient markers"), Error);

  // With regularization enabled the same input is allowed.
  IKSettings settings;
  settings.scale_regularization = 1.0;
  CHECK_NOTHROW(fit_scales(model, sparse, default_pose(model), settings));
}

TEST_CASE("fitted scale factors stay inside the plausibility gate") {
  const SkeletalModel model = load_model(kGenericModel);
  Draw draw(33);
  const Pose pose = default_pose(model);
  LabeledPoints markers = marker_positions(model, pose, ScaleSet::ones(model.segment_count()));
  markers.positions *= 3.0;  // absurd targets pull scales far beyond the gate
  const ScaleFitResult fit = fit_scales(model, markers, pose);
  CHECK(fit.scales.factors.maxCoeff() <= 2.0 + 1e-12);
  CHECK(fit.scales.factors.minCoeff() >= 0.5 - 1e-12);
}

TEST_CASE("IK from an already-optimal init converges immediately") {
  const SkeletalModel model = load_model(kGenericModel);
  Draw draw(34);
  const ScaleSet scales = random_scales(model, draw);
  Pose pose = default_pose(model);
  pose.values[model.coordinate_index("hip_flexion_r")] = 0.4;
  pose.values[model.coordinate_index("elbow_flex_l")] = 0.7;
  const LabeledPoints targets = keypoint_targets(model, pose, scales);

  const IKFrameResult r = inverse_kinematics_frame(model, scales, targets, pose);
  CHECK(r.converged);
  CHECK(r.iterations <= 2);
  CHECK(r.rms_m < 1e-9);
}

TEST_CASE("IK recovers a pose from a small perturbation of the init") {
  const SkeletalModel model = load_model(kGenericModel);
  Draw draw(35);
  const ScaleSet scales = random_scales(model, draw);
  for (int trial = 0; trial < 5; ++trial) {
    Pose truth = default_pose(model);
    for (int c = 0; c < model.coordinate_count(); ++c) {
      const Coordinate& coord = model.coordinates[c];
      if (coord.range)
        truth.values[c] = draw.uniform(coord.range->first * 0.5, coord.range->second * 0.5);
      else if (coord.kind == CoordKind::Rotation)
        truth.values[c] += draw.uniform(-0.5, 0.5);
    }
    const LabeledPoints targets = keypoint_targets(model, truth, scales);

    Pose init = truth;
    for (int c = 0; c < model.coordinate_count(); ++c)
      if (model.coordinates[c].kind == CoordKind::Rotation)
        init.values[c] += draw.uniform(-rad_from_deg(5.0), rad_from_deg(5.0));

    const IKFrameResult r = inverse_kinematics_frame(model, scales, targets, init);
    CHECK(r.converged);
    for (int c = 0; c < model.coordinate_count(); ++c)
      CHECK(std::abs(r.pose.values[c] - truth.values[c]) <
            (model.coordinates[c].kind == CoordKind::Rotation ? rad_from_deg(0.5) : 5e-3));
  }
}

TEST_CASE("project mode parks unreachable coordinates at their range boundary") {
  const SkeletalModel model = load_model(kGenericModel);
  const ScaleSet scales = ScaleSet::ones(model.segment_count());
  // Targets generated beyond the elbow's range: reachable only outside limits.
  SkeletalModel unlimited = model;
  const int elbow = model.coordinate_index("elbow_flex_r");
  unlimited.coordinates[elbow].range = std::make_pair(-3.0, 3.0);
  Pose beyond = default_pose(model);
  beyond.values[elbow] = rad_from_deg(-25.0);  // range is [-5, 150] deg
  const LabeledPoints targets = keypoint_targets(unlimited, beyond, scales);

  const IKFrameResult r = inverse_kinematics_frame(model, scales, targets, default_pose(model));
  CHECK(r.pose.values[elbow] == doctest::Approx(rad_from_deg(-5.0)).epsilon(1e-9));
}

TEST_CASE("project mode never leaves a constrained coordinate outside its range") {
  const SkeletalModel model = load_model(kGenericModel);
  Draw draw(36);
  const ScaleSet scales = ScaleSet::ones(model.segment_count());
  for (int trial = 0; trial < 20; ++trial) {
    LabeledPoints targets;
    targets.labels = model.keypoint_labels();
    targets.positions = MatrixX3d(model.keypoint_count(), 3);
    for (int i = 0; i < model.keypoint_count(); ++i)
      targets.positions.row(i) << draw.uniform(-1, 1), draw.uniform(0, 2), draw.uniform(-1, 1);
    const IKFrameResult r = inverse_kinematics_frame(model, scales, targets, default_pose(model));
    for (int c = 0; c < model.coordinate_count(); ++c) {
      const auto& range = model.coordinates[c].range;
      if (!range) continue;
      CHECK(r.pose.values[c] >= range->first - 1e-15);
      CHECK(r.pose.values[c] <= range->second + 1e-15);
    }
  }
}

TEST_CASE("penalty mode pulls violations back toward the ranges") {
  const SkeletalModel model = load_model(kGenericModel);
  const ScaleSet scales = ScaleSet::ones(model.segment_count());
  const int elbow = model.coordinate_index("elbow_flex_r");
  SkeletalModel unlimited = model;
  unlimited.coordinates[elbow].range = std::make_pair(-3.0, 3.0);
  Pose beyond = default_pose(model);
  beyond.values[elbow] = rad_from_deg(-25.0);
  const LabeledPoints targets = keypoint_targets(unlimited, beyond, scales);

  IKSettings settings;
  settings.limit_mode = LimitMode::Penalty;
  settings.penalty_weight = 1e4;
  const IKFrameResult r =
      inverse_kinematics_frame(model, scales, targets, default_pose(model), settings);
  // Near the boundary, small leakage allowed by the quadratic penalty.
  CHECK(r.pose.values[elbow] > rad_from_deg(-8.0));
  CHECK(r.pose.values[elbow] < rad_from_deg(0.0));
}

TEST_CASE("empty targets are rejected") {
  const SkeletalModel model = load_model(kGenericModel);
  LabeledPoints none;
  CHECK_THROWS_AS(inverse_kinematics_frame(model, ScaleSet::ones(model.segment_count()), none,
                                           default_pose(model)),
                  Error);
}

TEST_CASE("constant target sequences give constant pose sequences") {
  const SkeletalModel model = load_model(kGenericModel);
  Draw draw(37);
  const ScaleSet scales = random_scales(model, draw);
  Pose pose = default_pose(model);
  pose.values[model.coordinate_index("knee_angle_l")] = 0.5;
  const LabeledPoints frame = keypoint_targets(model, pose, scales);
  const std::vector<LabeledPoints> sequence(6, frame);

  const IKSequenceResult r = inverse_kinematics_sequence(model, scales, sequence, 60.0);
  CHECK(r.non_converged_frames == 0);
  for (int t = 1; t < r.motion.frame_count(); ++t)
    CHECK((r.motion.values.row(t) - r.motion.values.row(0)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("a single-frame sequence matches inverse_kinematics_frame with the default init") {
  const SkeletalModel model = load_model(kGenericModel);
  Draw draw(38);
  const ScaleSet scales = random_scales(model, draw);
  Pose pose = default_pose(model);
  pose.values[model.coordinate_index("hip_flexion_l")] = 0.3;
  const LabeledPoints frame = keypoint_targets(model, pose, scales);

  const IKSequenceResult seq = inverse_kinematics_sequence(model, scales, {frame}, 60.0);
  const IKFrameResult single =
      inverse_kinematics_frame(model, scales, frame, default_pose(model));
  CHECK((seq.motion.values.row(0).transpose() - single.pose.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("IK tracks a smooth synthetic motion to a fraction of a degree") {
  const SkeletalModel model = load_model(kGenericModel);
  ClipSpec spec;
  spec.seed = 5;
  spec.subject.seed = 6;
  spec.duration_s = 1.0;
  const MotionSequence truth = generate_motion(model, spec);
  const ScaleSet scales = spec.subject.resolve(model);

  std::vector<LabeledPoints> targets;
  for (int t = 0; t < truth.frame_count(); ++t)
    targets.push_back(keypoint_targets(model, truth.pose(t), scales));

  const IKSequenceResult r = inverse_kinematics_sequence(model, scales, targets, 60.0);
  CHECK(r.non_converged_frames == 0);
  double worst = 0;
  for (int t = 0; t < truth.frame_count(); ++t)
    for (int c = 0; c < model.coordinate_count(); ++c)
      if (model.coordinates[c].kind == CoordKind::Rotation)
        worst = std::max(worst, std::abs(r.motion.values(t, c) - truth.values(t, c)));
  CHECK(deg_from_rad(worst) < 0.5);
}

TEST_CASE("sequence IK reports the failing frame index") {
  const SkeletalModel model = load_model(kGenericModel);
  const ScaleSet scales = ScaleSet::ones(model.segment_count());
  LabeledPoints good = keypoint_targets(model, default_pose(model), scales);
  LabeledPoints bad;
  bad.labels = {"not_a_label"};
  bad.positions = MatrixX3d::Zero(1, 3);
  CHECK_THROWS_WITH_AS(inverse_kinematics_sequence(model, scales, {good, bad}, 60.0),
                       doctest::Contains("frame 1"), Error);
}

// ---- Butterworth -----------------------------------------------------------

TEST_CASE("zero-phase filter leaves constants untouched") {
  Eigen::MatrixXd series = Eigen::MatrixXd::Constant(200, 3, 4.2);
  series.col(1).setConstant(-17.0);
  const Eigen::MatrixXd out = butterworth_lowpass(series, 6.0, 60.0, 4);
  CHECK((out - series).cwiseAbs().maxCoeff() < 1e-9);
}

namespace {

// Single-frequency DFT amplitude over an integer number of periods.
double tone_amplitude(const Eigen::VectorXd& x, double freq_hz, double fs) {
  const int n = static_cast<int>(x.size());
  double re = 0, im = 0;
  for (int i = 0; i < n; ++i) {
    const double w = 2.0 * M_PI * freq_hz * i / fs;
    re += x[i] * std::cos(w);
    im += x[i] * std::sin(w);
  }
  return 2.0 * std::hypot(re, im) / n;
}

}  // namespace

TEST_CASE("single forward pass sits at -3 dB at the cutoff") {
  const double fs = 60.0, fc = 6.0;
  const int periods = 60;
  const int n = static_cast<int>(periods * fs / fc);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = std::sin(2.0 * M_PI * fc * i / fs);
  const Eigen::VectorXd y = butterworth_forward(x, fc, fs, 4);
  // Discard the transient, measure over the steady tail.
  const int tail = n / 2;
  const double amp = tone_amplitude(y.tail(tail), fc, fs);
  const double db = 20.0 * std::log10(amp);
  CHECK(db == doctest::Approx(-3.0103).epsilon(0.15));  // within 0.5 dB
}

TEST_CASE("a tone at ten times the cutoff is attenuated by more than 30 dB") {
  const double fs = 720.0, fc = 6.0, tone = 60.0;
  const int n = 2880;
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = std::sin(2.0 * M_PI * tone * i / fs);
  const Eigen::VectorXd y = butterworth_forward(x, fc, fs, 4);
  const double amp = tone_amplitude(y.tail(n / 2), tone, fs);
  CHECK(20.0 * std::log10(amp) < -30.0);
}

TEST_CASE("zero-phase application introduces no lag") {
  const double fs = 60.0, fc = 6.0, tone = 2.0;
  const int n = 600;
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = std::sin(2.0 * M_PI * tone * i / fs);
  const Eigen::MatrixXd y = butterworth_lowpass(x, fc, fs, 4);

  // Cross-correlation peak of raw vs filtered must sit at lag zero.
  int best_lag = -99;
  double best = -1e300;
  for (int lag = -5; lag <= 5; ++lag) {
    double corr = 0;
    for (int i = 100; i < n - 100; ++i) corr += x(i, 0) * y(i + lag, 0);
    if (corr > best) {
      best = corr;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("filter input validation") {
  Eigen::MatrixXd shorty = Eigen::MatrixXd::Zero(10, 1);
  CHECK_THROWS_WITH_AS(butterworth_lowpass(shorty, 6.0, 60.0, 4), doctest::Contains("short"),
                       Error);
  Eigen::MatrixXd ok = Eigen::MatrixXd::Zero(100, 1);
  CHECK_THROWS_WITH_AS(butterworth_lowpass(ok, 30.0, 60.0, 4), doctest::Contains("Nyquist"),
                       Error);
  CHECK_THROWS_AS(butterworth_lowpass(ok, 45.0, 60.0, 4), Error);
}

// ---- reconstruction pipeline -------------------------------------------------

namespace {

ClipObservation quick_clip(std::uint64_t seed, double noise_px, double duration = 2.0) {
  const SkeletalModel model = load_model(kGenericModel);
  ClipSpec spec;
  spec.seed = seed;
  spec.subject.seed = mix_seed(seed, 77);
  spec.duration_s = duration;
  spec.pixel_noise = noise_px;
  return render_clip(model, spec);
}

}  // namespace

TEST_CASE("zero-noise reconstruction recovers motion and scales") {
  const SkeletalModel model = load_model(kGenericModel);
  const ClipObservation clip = quick_clip(101, 0.0, 3.0);

  ReconstructionSettings settings;
  const ReconstructionResult r =
      reconstruct_sequence(model, clip.cam_frontal, clip.cam_sagittal, clip.view_frontal,
                           clip.view_sagittal, clip.static_frames / 2, settings);

  CHECK(r.report.scale_fit_converged);
  CHECK(r.report.ik_non_converged_frames == 0);
  CHECK((r.scales.factors - clip.truth_scales.factors).cwiseAbs().maxCoeff() < 1e-2);

  double mae = 0;
  int count = 0;
  for (int t = 0; t < r.motion.frame_count(); ++t)
    for (int c = 0; c < model.coordinate_count(); ++c)
      if (model.coordinates[c].kind == CoordKind::Rotation) {
        mae += std::abs(r.motion.values(t, c) - clip.truth_motion.values(t, c));
        ++count;
      }
  CHECK(deg_from_rad(mae / count) < 1.0);
}

TEST_CASE("noise degrades reconstruction accuracy") {
  const SkeletalModel model = load_model(kGenericModel);
  auto run_mae = [&](double noise) {
    const ClipObservation clip = quick_clip(202, noise, 2.0);
    ReconstructionSettings settings;
    const ReconstructionResult r =
        reconstruct_sequence(model, clip.cam_frontal, clip.cam_sagittal, clip.view_frontal,
                             clip.view_sagittal, clip.static_frames / 2, settings);
    double mae = 0;
    int count = 0;
    for (int t = 0; t < r.motion.frame_count(); ++t)
      for (int c = 0; c < model.coordinate_count(); ++c)
        if (model.coordinates[c].kind == CoordKind::Rotation) {
          mae += std::abs(r.motion.values(t, c) - clip.truth_motion.values(t, c));
          ++count;
        }
    return mae / count;
  };
  CHECK(run_mae(0.0) < run_mae(2.0));
}

TEST_CASE("all-low-confidence input names the first empty frame") {
  const SkeletalModel model = load_model(kGenericModel);
  ClipObservation clip = quick_clip(103, 0.0, 1.0);
  clip.view_frontal.confidence.setZero();
  ReconstructionSettings settings;
  CHECK_THROWS_WITH_AS(
      reconstruct_sequence(model, clip.cam_frontal, clip.cam_sagittal, clip.view_frontal,
                           clip.view_sagittal, 0, settings),
      doctest::Contains("frame 0"), Error);
}

TEST_CASE("short gaps are interpolated, long gaps are an error") {
  const SkeletalModel model = load_model(kGenericModel);
  ReconstructionSettings settings;

  ClipObservation clip = quick_clip(104, 0.0, 1.0);
  clip.view_frontal.confidence.block(20, 3, 4, 1).setZero();  // 4-frame gap, one keypoint
  const ReconstructionResult ok =
      reconstruct_sequence(model, clip.cam_frontal, clip.cam_sagittal, clip.view_frontal,
                           clip.view_sagittal, 0, settings);
  CHECK(ok.report.gaps_interpolated == 4);
  CHECK(ok.report.observations_dropped == 4);

  ClipObservation bad = quick_clip(104, 0.0, 1.0);
  bad.view_frontal.confidence.block(20, 3, 9, 1).setZero();  // 9 frames > limit of 5
  CHECK_THROWS_WITH_AS(
      reconstruct_sequence(model, bad.cam_frontal, bad.cam_sagittal, bad.view_frontal,
                           bad.view_sagittal, 0, settings),
      doctest::Contains("gap"), Error);
}

TEST_CASE("views must agree on labels and frame counts") {
  const SkeletalModel model = load_model(kGenericModel);
  ClipObservation clip = quick_clip(105, 0.0, 1.0);
  ViewTrack2d truncated = clip.view_sagittal;
  truncated.u.conservativeResize(10, truncated.u.cols());
  truncated.v.conservativeResize(10, truncated.v.cols());
  truncated.confidence.conservativeResize(10, truncated.confidence.cols());
  ReconstructionSettings settings;
  CHECK_THROWS_AS(reconstruct_sequence(model, clip.cam_frontal, clip.cam_sagittal,
                                       clip.view_frontal, truncated, 0, settings),
                  Error);
}
