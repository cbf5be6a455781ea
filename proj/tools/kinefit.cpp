// kinefit command-line tool: dataset generation, the multi-step reconstruction
// pipeline, evaluation, gradient checks and model validation.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "kinefit/io.hpp"
#include "kinefit/losses.hpp"
#include "kinefit/metrics.hpp"
#include "kinefit/synthgen.hpp"

namespace fs = std::filesystem;
using namespace kinefit;

namespace {

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Numeric:
    case ErrorKind::Degenerate:
      return 1;
    default:
      return 2;
  }
}

template <typename F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

struct FitPaths {
  std::string cam_a, cam_b, kp2d_a, kp2d_b;
  double frame_rate = 60.0;
  int static_frame = 0;
  std::string truth_motion, truth_scales;  // for --self-eval, when present
};

FitPaths resolve_fit_inputs(const std::string& clip_dir, std::string cam_a, std::string cam_b,
                            std::string kp2d_a, std::string kp2d_b, double fps) {
  FitPaths p;
  p.frame_rate = fps;
  if (!clip_dir.empty()) {
    const fs::path dir(clip_dir);
    const ClipMeta meta = read_clip_meta((dir / "clip.meta").string());
    p.cam_a = (dir / "frontal.kcam").string();
    p.cam_b = (dir / "sagittal.kcam").string();
    p.kp2d_a = (dir / "kp2d_frontal.csv").string();
    p.kp2d_b = (dir / "kp2d_sagittal.csv").string();
    p.frame_rate = meta.frame_rate;
    p.static_frame = meta.static_frames > 0 ? meta.static_frames / 2 : 0;
    if (fs::exists(dir / "motion.csv")) p.truth_motion = (dir / "motion.csv").string();
    if (fs::exists(dir / "scales.csv")) p.truth_scales = (dir / "scales.csv").string();
  }
  auto pick = [](std::string& dst, const std::string& flag_value, const char* flag) {
    if (!flag_value.empty()) dst = flag_value;
    if (dst.empty()) fail(ErrorKind::Usage, std::string("missing ") + flag);
  };
  pick(p.cam_a, cam_a, "--cam-a");
  pick(p.cam_b, cam_b, "--cam-b");
  pick(p.kp2d_a, kp2d_a, "--kp2d-a");
  pick(p.kp2d_b, kp2d_b, "--kp2d-b");
  return p;
}

struct EvalJob {
  std::string name;
  std::string pred_dir;
  std::string truth_dir;
};

std::vector<EvalJob> collect_eval_jobs(const std::string& pred, const std::string& truth) {
  std::vector<EvalJob> jobs;
  const fs::path truth_path(truth);
  if (fs::exists(truth_path / "clip.meta")) {
    const ClipMeta meta = read_clip_meta((truth_path / "clip.meta").string());
    jobs.push_back({meta.name.empty() ? truth_path.filename().string() : meta.name, pred, truth});
    return jobs;
  }
  if (!fs::exists(truth_path / "manifest.json"))
    fail(ErrorKind::Usage, "--truth must be a clip directory or a dataset directory");
  for (const auto& entry : fs::directory_iterator(truth_path)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "clip.meta")) continue;
    const std::string name = entry.path().filename().string();
    const fs::path pred_dir = fs::path(pred) / name;
    if (!fs::exists(pred_dir / "motion.csv"))
      fail(ErrorKind::Usage, "mismatched clip sets: no prediction for clip '" + name + "'");
    jobs.push_back({name, pred_dir.string(), entry.path().string()});
  }
  if (jobs.empty()) fail(ErrorKind::Usage, "no clips found under '" + truth + "'");
  std::sort(jobs.begin(), jobs.end(), [](const EvalJob& a, const EvalJob& b) { return a.name < b.name; });
  return jobs;
}

void write_angle_traces(const SkeletalModel& model, const MotionSequence& pred,
                        const MotionSequence& truth, const std::string& clip,
                        const std::string& trace_dir, const std::string& plot_dir) {
  const int t_count = pred.frame_count();
  Eigen::VectorXd time(t_count);
  for (int t = 0; t < t_count; ++t) time[t] = t / pred.frame_rate;

  if (!trace_dir.empty()) {
    fs::create_directories(trace_dir);
    std::ofstream out(fs::path(trace_dir) / (clip + "_angles.csv"));
    out << "time";
    for (const auto& c : model.coordinates)
      if (c.kind == CoordKind::Rotation) out << "," << c.name << "_pred_deg," << c.name << "_truth_deg";
    out << "\n";
    for (int t = 0; t < t_count; ++t) {
      out << format_double(time[t]);
      for (int c = 0; c < model.coordinate_count(); ++c) {
        if (model.coordinates[c].kind != CoordKind::Rotation) continue;
        out << "," << format_double(deg_from_rad(pred.values(t, c))) << ","
            << format_double(deg_from_rad(truth.values(t, c)));
      }
      out << "\n";
    }
  }

  if (!plot_dir.empty()) {
    fs::create_directories(plot_dir);
    // Plot the four rotational coordinates with the largest error.
    std::vector<std::pair<double, int>> ranked;
    for (int c = 0; c < model.coordinate_count(); ++c) {
      if (model.coordinates[c].kind != CoordKind::Rotation) continue;
      ranked.emplace_back((pred.values.col(c) - truth.values.col(c)).cwiseAbs().mean(), c);
    }
    std::sort(ranked.rbegin(), ranked.rend());
    std::vector<Eigen::VectorXd> series;
    std::vector<std::string> labels;
    for (size_t i = 0; i < std::min<size_t>(4, ranked.size()); ++i) {
      const int c = ranked[i].second;
      series.push_back(pred.values.col(c).unaryExpr([](double v) { return deg_from_rad(v); }));
      labels.push_back(model.coordinates[c].name + " pred");
      series.push_back(truth.values.col(c).unaryExpr([](double v) { return deg_from_rad(v); }));
      labels.push_back(model.coordinates[c].name + " truth");
    }
    write_svg_traces((fs::path(plot_dir) / (clip + "_angles.svg")).string(),
                     clip + ": joint angle traces (deg)", time, series, labels);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinefit: skeletal kinematics toolkit (two-view pipeline, synthetic data, metrics)"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read default flag values from an INI file");

  // ---- model validate ----
  auto* model_cmd = app.add_subcommand("model", "Model file utilities");
  model_cmd->require_subcommand(1);
  auto* validate_cmd = model_cmd->add_subcommand("validate", "Validate a model file");
  std::string validate_path;
  validate_cmd->add_option("path", validate_path, "Model file")->required();

  // ---- gen ----
  auto* gen = app.add_subcommand("gen", "Generate a synthetic two-view dataset");
  std::string gen_model, gen_out, gen_manifest;
  DatasetSpec dataset;
  int gen_jobs = 1;
  gen->add_option("--model", gen_model, "Model file")->required();
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--subjects", dataset.subjects, "Number of subjects");
  gen->add_option("--clips-per-subject", dataset.clips_per_subject, "Clips per subject");
  gen->add_option("--duration", dataset.duration_s, "Clip duration, seconds");
  gen->add_option("--fps", dataset.frame_rate, "Frame rate, Hz");
  gen->add_option("--noise-px", dataset.pixel_noise, "2D observation noise sigma, px");
  gen->add_option("--marker-noise", dataset.marker_noise_m, "3D marker noise sigma, m");
  gen->add_option("--seed", dataset.seed, "Base seed")->envname("KINEFIT_SEED");
  gen->add_option("--camera-distance", dataset.rig.distance_m, "Camera distance, m");
  gen->add_option("--jobs", gen_jobs, "Parallel clip rendering threads");
  gen->add_option("--manifest", gen_manifest, "Regenerate from an existing manifest");

  // ---- fit ----
  auto* fit = app.add_subcommand("fit", "Reconstruct scales and motion from two-view 2D keypoints");
  std::string fit_model, fit_clip, fit_cam_a, fit_cam_b, fit_kp_a, fit_kp_b;
  std::string fit_out = "motion.csv", fit_scales_out = "scales.csv", fit_report;
  double fit_fps = 60.0, fit_filter_hz = 6.0, fit_conf = 0.3;
  int fit_static = -1;
  bool fit_self_eval = false;
  fit->add_option("--model", fit_model, "Model file")->required();
  fit->add_option("--clip", fit_clip, "Clip directory produced by gen (sets all inputs)");
  fit->add_option("--cam-a", fit_cam_a, "Camera file, view A");
  fit->add_option("--cam-b", fit_cam_b, "Camera file, view B");
  fit->add_option("--kp2d-a", fit_kp_a, "2D keypoints CSV, view A");
  fit->add_option("--kp2d-b", fit_kp_b, "2D keypoints CSV, view B");
  fit->add_option("--out", fit_out, "Output motion CSV");
  fit->add_option("--scales", fit_scales_out, "Output scales CSV");
  fit->add_option("--report", fit_report, "Write the stage report here");
  fit->add_option("--fps", fit_fps, "Frame rate when not using --clip");
  fit->add_option("--filter-hz", fit_filter_hz, "Butterworth cutoff, Hz");
  fit->add_option("--confidence-threshold", fit_conf, "Observation confidence threshold");
  fit->add_option("--static-frame", fit_static, "Static frame index for scaling");
  fit->add_flag("--self-eval", fit_self_eval, "Compare against bundled ground truth");

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Metrics between predicted and ground-truth bundles");
  std::string eval_model, eval_pred, eval_truth, eval_csv, eval_text, eval_plots, eval_traces;
  int eval_jobs = 1;
  eval->add_option("--model", eval_model, "Model file")->required();
  eval->add_option("--pred", eval_pred, "Prediction directory (per-clip motion.csv/scales.csv)")->required();
  eval->add_option("--truth", eval_truth, "Clip directory or dataset directory")->required();
  eval->add_option("--out-csv", eval_csv, "Write the report as CSV");
  eval->add_option("--out-text", eval_text, "Write the pretty report");
  eval->add_option("--plots", eval_plots, "Write per-clip SVG angle traces into this directory");
  eval->add_option("--per-coord", eval_traces, "Write per-coordinate angle CSVs into this directory");
  eval->add_option("--jobs", eval_jobs, "Parallel clip evaluation threads");

  // ---- gradcheck ----
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
  std::string grad_model, grad_loss;
  std::uint64_t grad_seed = 0;
  int grad_draws = 1000;
  double grad_tol = 1e-4;
  grad->add_option("--model", grad_model, "Model file (defaults to the bundled generic model)");
  grad->add_option("--seed", grad_seed, "Seed")->envname("KINEFIT_SEED");
  grad->add_option("--draws", grad_draws, "Random draws per loss");
  grad->add_option("--tol", grad_tol, "Relative tolerance");
  grad->add_option("--loss", grad_loss,
                   "Restrict to one loss (angle_free, angle_constrained, bio, scale, position, total)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (validate_cmd->parsed()) {
    return guarded([&]() {
      SkeletalModel model;
      try {
        model = load_model(validate_path);
      } catch (const Error& e) {
        std::cout << "invalid: " << e.what() << "\n";
        return exit_code_for(e);
      }
      const ValidationReport report = validate_model(model);
      std::cout << report.to_text();
      const FreeConstrainedSplit split = free_constrained_split(model);
      std::printf("model '%s': %d coordinates, %d segments, %d keypoints, %d markers, "
                  "%zu free rotations, %zu constrained coordinates\n",
                  model.name.c_str(), model.coordinate_count(), model.segment_count(),
                  model.keypoint_count(), model.marker_count(), split.free_rotational.size(),
                  split.constrained.size());
      return report.ok() ? 0 : 2;
    });
  }

  if (gen->parsed()) {
    return guarded([&]() {
      const SkeletalModel model = load_model(gen_model);
      const std::string manifest =
          gen_manifest.empty() ? generate_dataset(model, dataset, gen_out, gen_jobs)
                               : regenerate_dataset(model, gen_manifest, gen_out, gen_jobs);
      std::cout << manifest << "\n";
      return 0;
    });
  }

  if (fit->parsed()) {
    return guarded([&]() {
      const SkeletalModel model = load_model(fit_model);
      const FitPaths paths =
          resolve_fit_inputs(fit_clip, fit_cam_a, fit_cam_b, fit_kp_a, fit_kp_b, fit_fps);
      const Camera cam_a = read_camera_file(paths.cam_a);
      const Camera cam_b = read_camera_file(paths.cam_b);
      const ViewTrack2d track_a = read_keypoints2d_csv(paths.kp2d_a);
      const ViewTrack2d track_b = read_keypoints2d_csv(paths.kp2d_b);

      ReconstructionSettings settings;
      settings.frame_rate = paths.frame_rate;
      settings.filter_cutoff_hz = fit_filter_hz;
      settings.confidence_threshold = fit_conf;
      const int static_frame = fit_static >= 0 ? fit_static : paths.static_frame;

      const ReconstructionResult result =
          reconstruct_sequence(model, cam_a, cam_b, track_a, track_b, static_frame, settings);

      write_motion_csv(fit_out, result.motion, model);
      write_scales_csv(fit_scales_out, result.scales, model);
      std::string report_text = result.report.to_text();

      if (fit_self_eval) {
        if (paths.truth_motion.empty() || paths.truth_scales.empty())
          fail(ErrorKind::Usage, "--self-eval needs a clip directory with bundled ground truth");
        const MotionSequence truth = read_motion_csv(paths.truth_motion, model);
        const ScaleSet truth_scales = read_scales_csv(paths.truth_scales, model);
        const ClipMetrics m = evaluate_clip(model, fit_clip.empty() ? "clip" : fit_clip,
                                            result.motion, result.scales, truth, truth_scales);
        char buf[200];
        std::snprintf(buf, sizeof(buf),
                      "self_eval_mae_angle_deg %.6f\nself_eval_pa_mpjpe_mm %.6f\n"
                      "self_eval_mpjve_mm_s %.6f\n",
                      m.mae_angle_deg, m.pa_mpjpe_mm, m.mpjve_mm_s);
        report_text += buf;
      }
      if (!fit_report.empty()) write_text_file(fit_report, report_text);
      std::cout << report_text;
      return result.report.ik_non_converged_frames == 0 && result.report.scale_fit_converged
                 ? 0
                 : 1;
    });
  }

  if (eval->parsed()) {
    return guarded([&]() {
      const SkeletalModel model = load_model(eval_model);
      const std::vector<EvalJob> jobs = collect_eval_jobs(eval_pred, eval_truth);

      std::vector<ClipMetrics> metrics(jobs.size());
      std::vector<std::exception_ptr> errors(jobs.size());
      std::atomic<size_t> next{0};
      auto worker = [&]() {
        for (size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
          try {
            const fs::path pred_dir(jobs[i].pred_dir);
            const fs::path truth_dir(jobs[i].truth_dir);
            const MotionSequence pred =
                read_motion_csv((pred_dir / "motion.csv").string(), model);
            const ScaleSet pred_scales =
                read_scales_csv((pred_dir / "scales.csv").string(), model);
            const MotionSequence truth =
                read_motion_csv((truth_dir / "motion.csv").string(), model);
            const ScaleSet truth_scales =
                read_scales_csv((truth_dir / "scales.csv").string(), model);
            metrics[i] = evaluate_clip(model, jobs[i].name, pred, pred_scales, truth, truth_scales);
            write_angle_traces(model, pred, truth, jobs[i].name, eval_traces, eval_plots);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      };
      std::vector<std::thread> pool;
      for (int w = 0; w < std::max(1, eval_jobs); ++w) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);

      EvaluationReport report;
      report.clips = metrics;
      std::cout << report.to_text();
      if (!eval_csv.empty()) write_text_file(eval_csv, report.to_csv());
      if (!eval_text.empty()) write_text_file(eval_text, report.to_text());
      return 0;
    });
  }

  if (grad->parsed()) {
    return guarded([&]() {
      SkeletalModel model;
      if (!grad_model.empty()) {
        model = load_model(grad_model);
      } else {
        const char* root = std::getenv("KINEFIT_DATA_DIR");
        model = load_model((root ? std::string(root) : std::string("data")) + "/generic.kmodel");
      }
      const auto rows = gradient_check_suite(model, grad_seed, grad_draws, grad_tol, 0.99, grad_loss);
      std::printf("%-18s %7s %7s %8s %12s  %s\n", "loss", "draws", "passes", "rate",
                  "worst_rel", "status");
      bool all_pass = true;
      for (const auto& r : rows) {
        std::printf("%-18s %7d %7d %8.4f %12.3e  %s\n", r.loss.c_str(), r.draws, r.passes,
                    r.pass_rate, r.worst_rel_error, r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
      }
      return all_pass ? 0 : 1;
    });
  }

  return 2;
}
