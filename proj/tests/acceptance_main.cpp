// Acceptance suite: prints one pass/fail line per criterion and exits nonzero
// if any fails. Thresholds are fixed here, not tuned at run time.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "kinefit/fitting.hpp"
#include "kinefit/io.hpp"
#include "kinefit/losses.hpp"
#include "kinefit/metrics.hpp"
#include "kinefit/synthgen.hpp"

using namespace kinefit;
namespace fs = std::filesystem;

namespace {

const std::string kModelPath = std::string(KINEFIT_DATA_DIR) + "/generic.kmodel";

int g_failures = 0;

void report(int criterion, const char* name, bool pass, const std::string& detail) {
  std::printf("%-4s criterion %2d: %-28s %s\n", pass ? "PASS" : "FAIL", criterion, name,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Draw {
  std::mt19937_64 rng;
  explicit Draw(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) {
    return lo + (static_cast<double>(rng() >> 11) * 0x1.0p-53) * (hi - lo);
  }
  Eigen::Matrix3d rotation() {
    const Eigen::Vector3d axis =
        Eigen::Vector3d(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)).normalized();
    return Eigen::AngleAxisd(uniform(-M_PI, M_PI), axis).toRotationMatrix();
  }
};

char buffer[512];

// ---- criterion 1: analytic loss gradients vs finite differences ---------------

void criterion_1(const SkeletalModel& model) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = gradient_check_suite(model, /*seed=*/2024, /*draws=*/1000,
                                         /*rel_tol=*/1e-4, /*pass_threshold=*/0.99);
  bool pass = rows.size() == 6;
  double min_rate = 1.0;
  for (const auto& r : rows) {
    pass = pass && r.pass;
    min_rate = std::min(min_rate, r.pass_rate);
  }
  const double dt = seconds_since(t0);
  pass = pass && dt < 60.0;
  std::snprintf(buffer, sizeof(buffer), "min pass rate %.4f over 1000 draws/loss, %.1f s",
                min_rate, dt);
  report(1, "loss gradient fidelity", pass, buffer);
}

// ---- criterion 2: keypoint Jacobians vs finite differences --------------------

void criterion_2(const SkeletalModel& model) {
  const auto t0 = std::chrono::steady_clock::now();
  Draw draw(77);
  const double h = 1e-6;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Pose pose = default_pose(model);
    for (int c = 0; c < model.coordinate_count(); ++c) {
      const Coordinate& coord = model.coordinates[c];
      if (coord.range)
        pose.values[c] = draw.uniform(coord.range->first, coord.range->second);
      else if (coord.kind == CoordKind::Rotation)
        pose.values[c] = draw.uniform(-1.2, 1.2);
      else
        pose.values[c] += draw.uniform(-0.3, 0.3);
    }
    ScaleSet scales = ScaleSet::ones(model.segment_count());
    for (int s = 0; s < scales.segment_count(); ++s)
      for (int a = 0; a < 3; ++a) scales.factors(s, a) = draw.uniform(0.8, 1.2);

    for (Wrt wrt : {Wrt::Coordinates, Wrt::Scales}) {
      const Eigen::MatrixXd jac = jacobian_keypoints(model, pose, scales, wrt);
      const int n = static_cast<int>(jac.cols());
      Eigen::MatrixXd fd(jac.rows(), n);
      for (int p = 0; p < n; ++p) {
        Pose pp = pose, pm = pose;
        ScaleSet sp = scales, sm = scales;
        if (wrt == Wrt::Coordinates) {
          pp.values[p] += h;
          pm.values[p] -= h;
        } else {
          sp.factors(p / 3, p % 3) += h;
          sm.factors(p / 3, p % 3) -= h;
        }
        const KeypointSet plus = forward_kinematics(model, pp, sp);
        const KeypointSet minus = forward_kinematics(model, pm, sm);
        for (int i = 0; i < model.keypoint_count(); ++i)
          for (int a = 0; a < 3; ++a)
            fd(3 * i + a, p) = (plus.positions(i, a) - minus.positions(i, a)) / (2.0 * h);
      }
      worst = std::max(worst, (jac - fd).cwiseAbs().maxCoeff() /
                                  std::max(1.0, jac.cwiseAbs().maxCoeff()));
    }
  }
  const double dt = seconds_since(t0);
  const bool pass = worst < 1e-5 && dt < 60.0;
  std::snprintf(buffer, sizeof(buffer),
                "worst relative deviation %.3e over 100 draws (both argument sets), %.1f s",
                worst, dt);
  report(2, "kinematic Jacobian fidelity", pass, buffer);
}

// ---- criteria 3 and 4: reconstruction round trips ------------------------------

struct RoundTrip {
  double mae_deg = 0.0;
  double max_scale_err = 0.0;
  double pa_mpjpe_mm = 0.0;
};

RoundTrip run_round_trip(const SkeletalModel& model, const ClipSpec& spec) {
  const ClipObservation clip = render_clip(model, spec);
  ReconstructionSettings settings;
  settings.frame_rate = spec.frame_rate;
  const ReconstructionResult r =
      reconstruct_sequence(model, clip.cam_frontal, clip.cam_sagittal, clip.view_frontal,
                           clip.view_sagittal, clip.static_frames / 2, settings);

  RoundTrip out;
  out.max_scale_err = (r.scales.factors - clip.truth_scales.factors).cwiseAbs().maxCoeff();

  std::vector<int> rotational;
  for (int c = 0; c < model.coordinate_count(); ++c)
    if (model.coordinates[c].kind == CoordKind::Rotation) rotational.push_back(c);
  out.mae_deg = mae_angle(r.motion, clip.truth_motion, rotational);

  std::vector<KeypointSet> pred_kp, truth_kp;
  for (int t = 0; t < r.motion.frame_count(); ++t) {
    pred_kp.push_back(forward_kinematics(model, r.motion.pose(t), r.scales));
    truth_kp.push_back(forward_kinematics(model, clip.truth_motion.pose(t), clip.truth_scales));
  }
  out.pa_mpjpe_mm = pa_mpjpe(pred_kp, truth_kp, model.root_segment());
  return out;
}

void criterion_3(const SkeletalModel& model) {
  const auto t0 = std::chrono::steady_clock::now();
  ClipSpec spec;
  spec.seed = 303;
  spec.subject.seed = 304;
  spec.duration_s = 10.0;  // 600 motion frames at 60 fps
  spec.pixel_noise = 0.0;
  const RoundTrip r = run_round_trip(model, spec);
  const double dt = seconds_since(t0);
  const bool pass =
      r.mae_deg < 1.0 && r.max_scale_err < 1e-2 && r.pa_mpjpe_mm < 5.0 && dt < 300.0;
  std::snprintf(buffer, sizeof(buffer),
                "MAE %.4f deg (<1), scale err %.2e (<1e-2), PA-MPJPE %.3f mm (<5), %.1f s",
                r.mae_deg, r.max_scale_err, r.pa_mpjpe_mm, dt);
  report(3, "zero-noise round trip", pass, buffer);
}

void criterion_4(const SkeletalModel& model) {
  const double sigmas[4] = {0.0, 1.0, 2.0, 4.0};
  double means[4] = {0, 0, 0, 0};
  for (int seed = 0; seed < 10; ++seed) {
    for (int level = 0; level < 4; ++level) {
      ClipSpec spec;
      spec.seed = 400 + seed;  // same clip per seed; only sigma varies
      spec.subject.seed = 450 + seed;
      spec.duration_s = 3.0;
      spec.pixel_noise = sigmas[level];
      means[level] += run_round_trip(model, spec).mae_deg / 10.0;
    }
  }
  const bool pass = means[0] <= means[1] && means[1] <= means[2] && means[2] <= means[3];
  std::snprintf(buffer, sizeof(buffer),
                "mean MAE over 10 seeds: %.4f / %.4f / %.4f / %.4f deg at 0/1/2/4 px", means[0],
                means[1], means[2], means[3]);
  report(4, "noise monotonicity", pass, buffer);
}

// ---- criterion 5: Procrustes alignment -----------------------------------------

void criterion_5(const SkeletalModel& model) {
  Draw draw(505);
  // (a) exact similarity transforms are removed completely.
  double worst_metric = 0.0;
  {
    const int k = model.keypoint_count();
    std::vector<KeypointSet> truth(50), pred(50);
    for (int t = 0; t < 50; ++t) {
      truth[t].positions.resize(k, 3);
      for (int i = 0; i < k; ++i)
        truth[t].positions.row(i) << draw.uniform(-1, 1), draw.uniform(0, 2),
            draw.uniform(-1, 1);
      const Eigen::Matrix3d rot = draw.rotation();
      const double s = draw.uniform(0.5, 2.0);
      const Eigen::RowVector3d shift(draw.uniform(-3, 3), draw.uniform(-3, 3),
                                     draw.uniform(-3, 3));
      pred[t].positions = (s * (rot * truth[t].positions.transpose())).transpose();
      pred[t].positions.rowwise() += shift;
    }
    worst_metric = pa_mpjpe(pred, truth, 0);
  }

  // (b) the closed form matches a brute-force rotation grid on K=4: it can
  // only beat the grid on the shared squared objective, and the reported mean
  // distance agrees within the grid resolution.
  bool grid_ok = true;
  double worst_gap = 0.0;
  const double step_deg = 6.0;
  for (int trial = 0; trial < 3; ++trial) {
    MatrixX3d src(4, 3), tgt(4, 3);
    for (int i = 0; i < 4; ++i) {
      src.row(i) << draw.uniform(-1, 1), draw.uniform(-1, 1), draw.uniform(-1, 1);
      tgt.row(i) << draw.uniform(-1, 1), draw.uniform(-1, 1), draw.uniform(-1, 1);
    }
    const MatrixX3d src_rel = src.rowwise() - src.row(0);
    const MatrixX3d tgt_rel = tgt.rowwise() - tgt.row(0);
    const Eigen::RowVector3d ms = src_rel.colwise().mean(), mt = tgt_rel.colwise().mean();
    const MatrixX3d sc = src_rel.rowwise() - ms, tc = tgt_rel.rowwise() - mt;

    double grid_best_sq = 1e300, grid_mean = 1e300;
    const double step = rad_from_deg(step_deg);
    for (double a = 0; a < 2 * M_PI; a += step)
      for (double b = 0; b < M_PI; b += step)
        for (double c = 0; c < 2 * M_PI; c += step) {
          const Eigen::Matrix3d rot(Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()) *
                                    Eigen::AngleAxisd(b, Eigen::Vector3d::UnitX()) *
                                    Eigen::AngleAxisd(c, Eigen::Vector3d::UnitY()));
          const MatrixX3d rotated = (rot * sc.transpose()).transpose();
          double s = 0;
          for (int i = 0; i < 4; ++i) s += rotated.row(i).dot(tc.row(i));
          s /= sc.squaredNorm();
          if (s <= 0) continue;
          const double cost = (s * rotated - tc).squaredNorm();
          if (cost < grid_best_sq) {
            grid_best_sq = cost;
            grid_mean = (s * rotated - tc).rowwise().norm().mean();
          }
        }

    const ProcrustesResult aligned = procrustes_align(src_rel, tgt_rel, true);
    const double closed_sq = (aligned.aligned - tgt_rel).squaredNorm();
    const std::vector<KeypointSet> pred1{{src}}, truth1{{tgt}};
    const double closed_mean = pa_mpjpe(pred1, truth1, 0) / 1000.0;
    const double radius = sc.rowwise().norm().maxCoeff();
    const double resolution = 3.0 * std::sin(rad_from_deg(step_deg)) * radius + 1e-9;
    worst_gap = std::max(worst_gap, std::abs(grid_mean - closed_mean));
    grid_ok = grid_ok && closed_sq <= grid_best_sq + 1e-12 &&
              std::abs(grid_mean - closed_mean) <= resolution;
  }

  const bool pass = worst_metric <= 1e-9 && grid_ok;
  std::snprintf(buffer, sizeof(buffer),
                "similarity residual %.2e mm (<=1e-9), grid gap %.2e m within resolution",
                worst_metric, worst_gap);
  report(5, "Procrustes oracle", pass, buffer);
}

// ---- criterion 6: triangulation --------------------------------------------------

void criterion_6(const SkeletalModel&) {
  const Eigen::Vector3d target(0, 1.0, 0);
  const Camera cam_a = make_look_at_camera({3.5, 1.15, 0}, target);
  const Camera cam_b = make_look_at_camera({0, 1.05, 3.5}, target);

  Draw draw(606);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Eigen::Vector3d p(draw.uniform(-0.8, 0.8), draw.uniform(0.2, 1.9),
                            draw.uniform(-0.8, 0.8));
    const TriangulationResult r =
        triangulate_two_view(cam_a, cam_b, project(cam_a, p), project(cam_b, p));
    worst = std::max(worst, (r.point - p).norm());
  }

  bool degenerate_detected = false;
  try {
    triangulate_two_view(cam_a, cam_a, {540, 360}, {560, 360});
  } catch (const Error& e) {
    degenerate_detected = e.kind() == ErrorKind::Degenerate;
  }

  const bool pass = worst < 1e-6 && degenerate_detected;
  std::snprintf(buffer, sizeof(buffer),
                "worst recovery error %.2e m over 1000 points (<1e-6), degenerate rig %s", worst,
                degenerate_detected ? "detected" : "MISSED");
  report(6, "triangulation", pass, buffer);
}

// ---- criterion 7: Butterworth filter ---------------------------------------------

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

void criterion_7(const SkeletalModel&) {
  // DC gain through the zero-phase path.
  Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(400, 2, 3.7);
  const double dc_err =
      (butterworth_lowpass(constant, 6.0, 60.0, 4) - constant).cwiseAbs().maxCoeff();

  // Single-pass attenuation at the cutoff: 6 Hz tone sampled at 60 Hz.
  const double fs = 60.0, fc = 6.0;
  const int n = 1200;
  Eigen::VectorXd tone(n);
  for (int i = 0; i < n; ++i) tone[i] = std::sin(2.0 * M_PI * fc * i / fs);
  const Eigen::VectorXd filtered = butterworth_forward(tone, fc, fs, 4);
  const double cutoff_db = 20.0 * std::log10(tone_amplitude(filtered.tail(n / 2), fc, fs));

  // >30 dB at ten times the cutoff (sampled fast enough to represent it).
  const double fs_hi = 720.0;
  Eigen::VectorXd tone10(2880);
  for (int i = 0; i < tone10.size(); ++i) tone10[i] = std::sin(2.0 * M_PI * 60.0 * i / fs_hi);
  const Eigen::VectorXd filtered10 = butterworth_forward(tone10, fc, fs_hi, 4);
  const double tenx_db =
      20.0 * std::log10(tone_amplitude(filtered10.tail(tone10.size() / 2), 60.0, fs_hi));

  const bool pass = dc_err < 1e-9 && std::abs(cutoff_db - (-3.0103)) < 0.5 && tenx_db < -30.0;
  std::snprintf(buffer, sizeof(buffer),
                "DC error %.1e (<1e-9), cutoff %.2f dB (-3+/-0.5), 10x cutoff %.1f dB (<-30)",
                dc_err, cutoff_db, tenx_db);
  report(7, "Butterworth filter", pass, buffer);
}

// ---- criterion 8: loss semantics ---------------------------------------------------

void criterion_8(const SkeletalModel& model) {
  Draw draw(808);
  const FreeConstrainedSplit split = free_constrained_split(model);

  // 2 pi wrap invariance of the free-angle loss.
  double worst_wrap = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::MatrixXd pred(2, split.free_rotational.size());
    Eigen::MatrixXd truth(2, split.free_rotational.size());
    for (int t = 0; t < 2; ++t)
      for (int c = 0; c < pred.cols(); ++c) {
        pred(t, c) = draw.uniform(-4, 4);
        truth(t, c) = draw.uniform(-4, 4);
      }
    const double base = angle_loss_free(pred, truth);
    Eigen::MatrixXd wrapped = pred;
    for (int t = 0; t < 2; ++t)
      for (int c = 0; c < pred.cols(); ++c)
        wrapped(t, c) += 2.0 * M_PI * std::floor(draw.uniform(-3, 4));
    worst_wrap = std::max(worst_wrap, std::abs(angle_loss_free(wrapped, truth) - base));
  }

  // Bio loss: zero inside ranges, continuous at the boundary.
  std::vector<int> bio_cols;
  for (int c : split.constrained)
    if (model.coordinates[c].kind == CoordKind::Rotation) bio_cols.push_back(c);
  Eigen::VectorXd lo(bio_cols.size()), hi(bio_cols.size());
  for (size_t j = 0; j < bio_cols.size(); ++j) {
    lo[j] = model.coordinates[bio_cols[j]].range->first;
    hi[j] = model.coordinates[bio_cols[j]].range->second;
  }
  bool bio_zero_inside = true;
  double worst_boundary = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Eigen::MatrixXd inside(1, bio_cols.size());
    for (size_t j = 0; j < bio_cols.size(); ++j) inside(0, j) = draw.uniform(lo[j], hi[j]);
    bio_zero_inside = bio_zero_inside && bio_constraint_loss(inside, lo, hi) == 0.0;

    // Nudge one coordinate just past a bound; the loss must vanish with eps.
    Eigen::MatrixXd edge = inside;
    const int j = static_cast<int>(draw.uniform(0, bio_cols.size() - 1e-9));
    const double eps = 1e-9;
    edge(0, j) = draw.uniform(0, 1) < 0.5 ? hi[j] + eps : lo[j] - eps;
    worst_boundary = std::max(worst_boundary, bio_constraint_loss(edge, lo, hi));
  }

  // Keypoint loss invariance to the root translation of the prediction.
  double worst_pos = 0.0;
  for (int i = 0; i < 1000; ++i) {
    LossInputs in;
    in.model = &model;
    in.pred_motion.values = model.default_pose_values().transpose().replicate(1, 1);
    in.truth_motion.values = in.pred_motion.values;
    for (int c = 0; c < model.coordinate_count(); ++c) {
      const Coordinate& coord = model.coordinates[c];
      const double span = coord.range ? 0.4 : 0.5;
      in.pred_motion.values(0, c) += draw.uniform(-span, span);
      in.truth_motion.values(0, c) += draw.uniform(-span, span);
    }
    in.pred_scales = ScaleSet::ones(model.segment_count());
    in.truth_scales = ScaleSet::ones(model.segment_count());
    const double base = keypoint_position_loss(model, in.pred_motion, in.pred_scales,
                                               in.truth_motion, in.truth_scales);
    MotionSequence shifted = in.pred_motion;
    shifted.values(0, model.coordinate_index("pelvis_tx")) += draw.uniform(-2, 2);
    shifted.values(0, model.coordinate_index("pelvis_ty")) += draw.uniform(-2, 2);
    shifted.values(0, model.coordinate_index("pelvis_tz")) += draw.uniform(-2, 2);
    const double moved = keypoint_position_loss(model, shifted, in.pred_scales, in.truth_motion,
                                                in.truth_scales);
    worst_pos = std::max(worst_pos, std::abs(moved - base));
  }

  const bool pass =
      worst_wrap < 1e-9 && bio_zero_inside && worst_boundary < 1e-7 && worst_pos < 1e-9;
  std::snprintf(buffer, sizeof(buffer),
                "wrap dev %.1e, bio inside %s, boundary leak %.1e, root-shift dev %.1e",
                worst_wrap, bio_zero_inside ? "zero" : "NONZERO", worst_boundary, worst_pos);
  report(8, "loss semantics", pass, buffer);
}

// ---- criterion 9: dataset determinism through the CLI ------------------------------

void criterion_9(const SkeletalModel&) {
  const fs::path a = fs::temp_directory_path() / "kinefit_acc_gen_a";
  const fs::path b = fs::temp_directory_path() / "kinefit_acc_gen_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::string flags = std::string(" --model ") + kModelPath +
                            " --subjects 1 --clips-per-subject 2 --duration 1 --noise-px 1.5 "
                            "--seed 99 --out ";
  const std::string cli = KINEFIT_CLI;
  const int ra = std::system((cli + " gen" + flags + a.string() + " > /dev/null").c_str());
  const int rb = std::system((cli + " gen" + flags + b.string() + " > /dev/null").c_str());

  bool identical = ra == 0 && rb == 0;
  int files = 0;
  if (identical) {
    for (const auto& entry : fs::recursive_directory_iterator(a)) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), a);
      std::ifstream fa(entry.path(), std::ios::binary), fb(b / rel, std::ios::binary);
      const std::string ca((std::istreambuf_iterator<char>(fa)),
                           std::istreambuf_iterator<char>());
      const std::string cb((std::istreambuf_iterator<char>(fb)),
                           std::istreambuf_iterator<char>());
      identical = identical && !ca.empty() && ca == cb;
      ++files;
    }
  }
  const bool pass = identical && files >= 17;
  std::snprintf(buffer, sizeof(buffer), "%d files byte-identical across two cmd_gen runs", files);
  report(9, "dataset determinism", pass, buffer);
}

// ---- criterion 10: shipped model conformance -----------------------------------------

void criterion_10(const SkeletalModel& model) {
  const FreeConstrainedSplit split = free_constrained_split(model);
  const bool pass = model.coordinate_count() == 36 && model.segment_count() == 22 &&
                    model.keypoint_count() == 44 && split.free_rotational.size() == 9 &&
                    validate_model(model).ok();
  std::snprintf(buffer, sizeof(buffer), "J=%d B=%d K=%d free=%zu, validation %s",
                model.coordinate_count(), model.segment_count(), model.keypoint_count(),
                split.free_rotational.size(), validate_model(model).ok() ? "clean" : "DIRTY");
  report(10, "model conformance", pass, buffer);
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  SkeletalModel model;
  try {
    model = load_model(kModelPath);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "cannot load the shipped model: %s\n", e.what());
    return 1;
  }

  criterion_1(model);
  criterion_2(model);
  criterion_3(model);
  criterion_4(model);
  criterion_5(model);
  criterion_6(model);
  criterion_7(model);
  criterion_8(model);
  criterion_9(model);
  criterion_10(model);

  std::printf("%s: %d/10 criteria passed in %.1f s\n", g_failures == 0 ? "OK" : "FAILED",
              10 - g_failures, seconds_since(t0));
  return g_failures == 0 ? 0 : 1;
}
