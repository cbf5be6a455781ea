#include "kinefit/synthgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace kinefit {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

namespace {

class Rng {
public:
  explicit Rng(std::uint64_t seed) : rng_(seed) {}

  double uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

  // Box-Muller, one value per two uniforms; the draw count never depends on
  // the noise level, so scaled realizations share the same stream.
  double gaussian() {
    const double u1 = std::max(uniform01(), 1e-300);
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

private:
  std::mt19937_64 rng_;
};

double smootherstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * u * (u * (6.0 * u - 15.0) + 10.0);
}

// One sinusoidal component per coordinate: value(t) = offset + amp * sin(2 pi
// f_mult f0 t + phase), added on top of the coordinate default. Angular
// quantities in degrees, root translations in meters.
struct Harmonic {
  const char* coordinate;
  double offset;
  double amplitude;
  double freq_mult;
  double phase;
  bool translation = false;
};

const double kPi = M_PI;

std::vector<Harmonic> gait_harmonics() {
  return {
      {"pelvis_tx", 0, 0.04, 1, -kPi / 2, true},
      {"pelvis_ty", 0, 0.015, 2, 0, true},
      {"pelvis_tz", 0, 0.03, 1, 0, true},
      {"pelvis_tilt", 3, 2, 2, 0},
      {"pelvis_list", 0, 4, 1, 0},
      {"pelvis_rotation", 0, 6, 1, kPi / 2},
      {"hip_flexion_r", 10, 28, 1, 0},
      {"hip_flexion_l", 10, 28, 1, kPi},
      {"hip_adduction_r", 0, 5, 1, kPi / 2},
      {"hip_adduction_l", 0, 5, 1, -kPi / 2},
      {"hip_rotation_r", 0, 5, 1, 0.3},
      {"hip_rotation_l", 0, 5, 1, 0.3 + kPi},
      {"knee_angle_r", 35, 26, 1, -kPi / 3},
      {"knee_angle_l", 35, 26, 1, -kPi / 3 + kPi},
      {"knee_rotation_r", 0, 4, 1, 0.5},
      {"knee_rotation_l", 0, 4, 1, 0.5 + kPi},
      {"ankle_angle_r", 0, 12, 1, kPi / 4},
      {"ankle_angle_l", 0, 12, 1, kPi / 4 + kPi},
      {"subtalar_angle_r", 0, 5, 1, 0},
      {"subtalar_angle_l", 0, 5, 1, kPi},
      {"lumbar_extension", -5, 3, 2, 0},
      {"lumbar_bending", 0, 4, 1, kPi},
      {"lumbar_rotation", 0, 5, 1, -kPi / 2},
      {"neck_extension", 2, 2, 2, 0.5},
      {"arm_flex_r", -8, 18, 1, kPi},
      {"arm_flex_l", -8, 18, 1, 0},
      {"arm_add_r", 2, 4, 1, 0},
      {"arm_add_l", 2, 4, 1, kPi},
      {"arm_rot_r", 0, 5, 1, 1.1},
      {"arm_rot_l", 0, 5, 1, 1.1 + kPi},
      {"elbow_flex_r", 25, 12, 1, kPi},
      {"elbow_flex_l", 25, 12, 1, 0},
      {"pro_sup_r", 20, 10, 1, 0},
      {"pro_sup_l", 20, 10, 1, kPi},
      {"wrist_flex_r", 0, 8, 1, kPi},
      {"wrist_flex_l", 0, 8, 1, 0},
  };
}

std::vector<Harmonic> squat_harmonics() {
  return {
      {"pelvis_tx", -0.05, 0.05, 1, kPi / 2, true},
      {"pelvis_ty", -0.10, 0.10, 1, kPi / 2, true},
      {"pelvis_tilt", 8, 8, 1, -kPi / 2},
      {"hip_flexion_r", 35, 35, 1, -kPi / 2},
      {"hip_flexion_l", 35, 35, 1, -kPi / 2},
      {"hip_adduction_r", -3, 3, 1, -kPi / 2},
      {"hip_adduction_l", -3, 3, 1, -kPi / 2},
      {"knee_angle_r", 45, 42, 1, -kPi / 2},
      {"knee_angle_l", 45, 42, 1, -kPi / 2},
      {"knee_rotation_r", 2, 2, 1, -kPi / 2},
      {"knee_rotation_l", 2, 2, 1, -kPi / 2},
      {"ankle_angle_r", 12, 12, 1, -kPi / 2},
      {"ankle_angle_l", 12, 12, 1, -kPi / 2},
      {"subtalar_angle_r", 0, 3, 1, -kPi / 2},
      {"subtalar_angle_l", 0, 3, 1, kPi / 2},
      {"lumbar_extension", -12, 10, 1, kPi / 2},
      {"lumbar_rotation", 0, 3, 1, 0},
      {"neck_extension", 4, 4, 1, -kPi / 2},
      {"arm_flex_r", -40, 35, 1, kPi / 2},
      {"arm_flex_l", -40, 35, 1, kPi / 2},
      {"elbow_flex_r", 10, 8, 1, -kPi / 2},
      {"elbow_flex_l", 10, 8, 1, -kPi / 2},
      {"wrist_flex_r", 0, 5, 1, 0},
      {"wrist_flex_l", 0, 5, 1, kPi},
  };
}

std::vector<Harmonic> arm_wave_harmonics() {
  return {
      {"pelvis_ty", 0, 0.005, 2, 0, true},
      {"pelvis_list", 0, 2, 1, 0},
      {"pelvis_rotation", 0, 3, 1, kPi / 2},
      {"hip_flexion_r", 2, 4, 1, 0},
      {"hip_flexion_l", 2, 4, 1, kPi},
      {"knee_angle_r", 6, 4, 1, kPi},
      {"knee_angle_l", 6, 4, 1, 0},
      {"ankle_angle_r", 0, 3, 1, 0},
      {"ankle_angle_l", 0, 3, 1, kPi},
      {"lumbar_bending", 0, 4, 1, kPi},
      {"lumbar_rotation", 0, 4, 1, 0},
      {"neck_extension", 0, 3, 0.5, 0},
      {"arm_flex_r", -70, 25, 1, 0},
      {"arm_add_r", 10, 15, 1, kPi / 2},
      {"arm_rot_r", 0, 20, 1, 0},
      {"elbow_flex_r", 60, 25, 1, kPi / 2},
      {"pro_sup_r", 0, 30, 1, 0},
      {"wrist_flex_r", 0, 30, 1, kPi / 2},
      {"arm_flex_l", -10, 8, 1, kPi},
      {"arm_add_l", 4, 5, 1, 0},
      {"elbow_flex_l", 20, 8, 1, 0},
      {"wrist_flex_l", 0, 6, 1, kPi},
  };
}

std::vector<Harmonic> harmonics_for(MotionKind kind) {
  switch (kind) {
    case MotionKind::Gait: return gait_harmonics();
    case MotionKind::Squat: return squat_harmonics();
    case MotionKind::ArmWave: return arm_wave_harmonics();
    case MotionKind::Csv: break;
  }
  fail(ErrorKind::Usage, "no procedural harmonics for this motion kind");
}

double clip_base_frequency(MotionKind kind) {
  switch (kind) {
    case MotionKind::Gait: return 0.9;
    case MotionKind::Squat: return 0.35;
    case MotionKind::ArmWave: return 1.2;
    case MotionKind::Csv: break;
  }
  return 1.0;
}

MotionSequence imported_motion(const SkeletalModel& model, const ClipSpec& spec,
                               int* clamp_warnings) {
  MotionSequence motion = read_motion_csv(spec.motion_csv, model);
  int warnings = 0;
  for (int t = 0; t < motion.frame_count(); ++t) {
    for (int c = 0; c < model.coordinate_count(); ++c) {
      const auto& range = model.coordinates[c].range;
      if (!range) continue;
      const double v = motion.values(t, c);
      const double clamped = std::clamp(v, range->first, range->second);
      if (clamped != v) {
        motion.values(t, c) = clamped;
        ++warnings;
      }
    }
  }
  if (clamp_warnings) *clamp_warnings = warnings;
  return motion;
}

}  // namespace

const char* motion_kind_name(MotionKind kind) {
  switch (kind) {
    case MotionKind::Gait: return "gait";
    case MotionKind::Squat: return "squat";
    case MotionKind::ArmWave: return "arm-wave";
    case MotionKind::Csv: return "csv";
  }
  return "?";
}

MotionKind motion_kind_from_name(const std::string& name) {
  if (name == "gait") return MotionKind::Gait;
  if (name == "squat") return MotionKind::Squat;
  if (name == "arm-wave") return MotionKind::ArmWave;
  if (name == "csv") return MotionKind::Csv;
  fail(ErrorKind::Usage, "unknown motion kind '" + name + "' (gait, squat, arm-wave, csv)");
}

ScaleSet SubjectSpec::resolve(const SkeletalModel& model) const {
  Rng rng(mix_seed(seed, 0x5ca1e));
  ScaleSet scales = ScaleSet::ones(model.segment_count());
  for (int s = 0; s < scales.segment_count(); ++s)
    for (int a = 0; a < 3; ++a)
      scales.factors(s, a) =
          std::clamp(std::exp(scale_sigma * rng.gaussian()), clip_low, clip_high);
  return scales;
}

MotionSequence generate_motion(const SkeletalModel& model, const ClipSpec& spec) {
  if (!(spec.duration_s > 0)) fail(ErrorKind::Usage, "clip duration must be positive");
  if (!(spec.frame_rate > 0)) fail(ErrorKind::Usage, "frame rate must be positive");
  if (spec.motion == MotionKind::Csv) {
    int warnings = 0;
    return imported_motion(model, spec, &warnings);
  }

  const int frames = static_cast<int>(std::lround(spec.duration_s * spec.frame_rate));
  const Eigen::VectorXd defaults = model.default_pose_values();

  Rng rng(mix_seed(spec.seed, 1));
  const double f0 = clip_base_frequency(spec.motion) * rng.uniform(0.92, 1.08);
  constexpr double kRampSeconds = 0.7;

  struct Component {
    int coordinate;
    double offset, amplitude, freq_hz, phase;
  };
  std::vector<Component> components;
  for (const Harmonic& h : harmonics_for(spec.motion)) {
    const int c = model.coordinate_index(h.coordinate);
    if (c < 0) continue;  // model without this coordinate: skip the component
    Component comp;
    comp.coordinate = c;
    const double scale = h.translation ? 1.0 : rad_from_deg(1.0);
    comp.offset = h.offset * scale;
    comp.amplitude = h.amplitude * scale * rng.uniform(0.85, 1.1);
    comp.freq_hz = h.freq_mult * f0;
    comp.phase = h.phase + rng.uniform(-0.3, 0.3);
    components.push_back(comp);
  }

  MotionSequence motion;
  motion.frame_rate = spec.frame_rate;
  motion.values = defaults.transpose().replicate(frames, 1);
  for (int t = 0; t < frames; ++t) {
    const double time = t / spec.frame_rate;
    const double env = spec.motion_amplitude * smootherstep(time / kRampSeconds);
    for (const Component& comp : components)
      motion.values(t, comp.coordinate) +=
          env * (comp.offset +
                 comp.amplitude * std::sin(2.0 * kPi * comp.freq_hz * time + comp.phase));
  }

  // Procedural trajectories are designed to stay inside every range; verify.
  for (int t = 0; t < frames; ++t)
    for (int c = 0; c < model.coordinate_count(); ++c) {
      const auto& range = model.coordinates[c].range;
      if (range && (motion.values(t, c) < range->first || motion.values(t, c) > range->second))
        fail(ErrorKind::Numeric, "generated motion violates the range of '" +
                                     model.coordinates[c].name + "' at frame " +
                                     std::to_string(t));
    }
  return motion;
}

ClipObservation render_clip(const SkeletalModel& model, const ClipSpec& spec) {
  ClipObservation clip;
  MotionSequence motion;
  if (spec.motion == MotionKind::Csv)
    motion = imported_motion(model, spec, &clip.range_clamp_warnings);
  else
    motion = generate_motion(model, spec);

  const int static_frames = static_cast<int>(std::lround(spec.static_duration_s * spec.frame_rate));
  clip.static_frames = static_frames;
  clip.truth_motion.frame_rate = spec.frame_rate;
  clip.truth_motion.values.resize(static_frames + motion.frame_count(), model.coordinate_count());
  clip.truth_motion.values.topRows(static_frames) =
      model.default_pose_values().transpose().replicate(static_frames, 1);
  clip.truth_motion.values.bottomRows(motion.frame_count()) = motion.values;

  clip.truth_scales = spec.subject.resolve(model);

  // Camera rig: frontal view down the +X axis, sagittal at 90 degrees azimuth,
  // both perturbed per seed.
  Rng cam_rng(mix_seed(spec.seed, 2));
  const Eigen::Vector3d base_target(0.0, 1.0, 0.0);
  auto place = [&](double azimuth_deg, const std::string& name) {
    const double az =
        rad_from_deg(azimuth_deg + cam_rng.uniform(-spec.rig.azimuth_jitter_deg,
                                                   spec.rig.azimuth_jitter_deg));
    const double h = spec.rig.height_m +
                     cam_rng.uniform(-spec.rig.height_jitter_m, spec.rig.height_jitter_m);
    Eigen::Vector3d target = base_target;
    for (int a = 0; a < 3; ++a)
      target[a] += cam_rng.uniform(-spec.rig.target_jitter_m, spec.rig.target_jitter_m);
    const Eigen::Vector3d position(target.x() + spec.rig.distance_m * std::cos(az), h,
                                   target.z() + spec.rig.distance_m * std::sin(az));
    Camera cam = make_look_at_camera(position, target, spec.rig.focal_length_mm,
                                     spec.rig.sensor_width_mm, spec.rig.image_width_px,
                                     spec.rig.image_height_px);
    cam.name = name;
    return cam;
  };
  clip.cam_frontal = place(0.0, "frontal");
  clip.cam_sagittal = place(90.0, "sagittal");
  if ((clip.cam_frontal.center() - clip.cam_sagittal.center()).norm() < 0.5)
    fail(ErrorKind::Degenerate, "camera placement degenerate: views nearly coincide");

  const int frames = clip.truth_motion.frame_count();
  const auto kp_labels = model.keypoint_labels();
  const int k = model.keypoint_count();

  auto init_view = [&](ViewTrack2d* view) {
    view->labels = kp_labels;
    view->u = Eigen::MatrixXd::Zero(frames, k);
    view->v = Eigen::MatrixXd::Zero(frames, k);
    view->confidence = Eigen::MatrixXd::Zero(frames, k);
  };
  init_view(&clip.view_frontal);
  init_view(&clip.view_sagittal);

  clip.markers_3d.labels.clear();
  for (const auto& mk : model.markers) clip.markers_3d.labels.push_back(mk.name);
  clip.markers_3d.frames.assign(frames, MatrixX3d::Zero(model.marker_count(), 3));

  Rng px_rng(mix_seed(spec.seed, 3));
  Rng mk_rng(mix_seed(spec.seed, 4));

  for (int t = 0; t < frames; ++t) {
    const Pose pose = clip.truth_motion.pose(t);
    const KeypointSet kp = forward_kinematics(model, pose, clip.truth_scales);

    ViewTrack2d* views[2] = {&clip.view_frontal, &clip.view_sagittal};
    const Camera* cams[2] = {&clip.cam_frontal, &clip.cam_sagittal};
    for (int view = 0; view < 2; ++view) {
      for (int i = 0; i < k; ++i) {
        Eigen::Vector2d uv;
        const bool in_front =
            try_project(*cams[view], kp.positions.row(i).transpose(), &uv);
        // Unit noise is always drawn so realizations scale with sigma.
        const Eigen::Vector2d noise(px_rng.gaussian(), px_rng.gaussian());
        if (!in_front) {
          views[view]->confidence(t, i) = 0.0;
          continue;
        }
        uv += spec.pixel_noise * noise;
        views[view]->u(t, i) = uv.x();
        views[view]->v(t, i) = uv.y();
        views[view]->confidence(t, i) = cams[view]->in_frame(uv) ? 1.0 : 0.0;
      }
    }

    const LabeledPoints markers = marker_positions(model, pose, clip.truth_scales);
    for (int m = 0; m < markers.count(); ++m) {
      const Eigen::Vector3d noise(mk_rng.gaussian(), mk_rng.gaussian(), mk_rng.gaussian());
      clip.markers_3d.frames[t].row(m) =
          markers.positions.row(m) + spec.marker_noise_m * noise.transpose();
    }
  }
  return clip;
}

// ---- dataset writing -----------------------------------------------------------

namespace {

json spec_to_json(const NamedClip& clip) {
  json j;
  j["name"] = clip.name;
  j["subject"] = clip.subject;
  const ClipSpec& s = clip.spec;
  j["motion"] = motion_kind_name(s.motion);
  if (!s.motion_csv.empty()) j["motion_csv"] = s.motion_csv;
  j["motion_amplitude"] = s.motion_amplitude;
  j["duration_s"] = s.duration_s;
  j["frame_rate"] = s.frame_rate;
  j["static_duration_s"] = s.static_duration_s;
  j["pixel_noise"] = s.pixel_noise;
  j["marker_noise_m"] = s.marker_noise_m;
  j["seed"] = s.seed;
  j["subject_seed"] = s.subject.seed;
  j["scale_sigma"] = s.subject.scale_sigma;
  j["scale_clip_low"] = s.subject.clip_low;
  j["scale_clip_high"] = s.subject.clip_high;
  json rig;
  rig["distance_m"] = s.rig.distance_m;
  rig["height_m"] = s.rig.height_m;
  rig["height_jitter_m"] = s.rig.height_jitter_m;
  rig["azimuth_jitter_deg"] = s.rig.azimuth_jitter_deg;
  rig["target_jitter_m"] = s.rig.target_jitter_m;
  rig["focal_length_mm"] = s.rig.focal_length_mm;
  rig["sensor_width_mm"] = s.rig.sensor_width_mm;
  rig["image_width_px"] = s.rig.image_width_px;
  rig["image_height_px"] = s.rig.image_height_px;
  j["rig"] = rig;
  return j;
}

NamedClip spec_from_json(const json& j) {
  NamedClip clip;
  clip.name = j.at("name").get<std::string>();
  clip.subject = j.at("subject").get<std::string>();
  ClipSpec& s = clip.spec;
  s.motion = motion_kind_from_name(j.at("motion").get<std::string>());
  if (j.contains("motion_csv")) s.motion_csv = j["motion_csv"].get<std::string>();
  if (j.contains("motion_amplitude")) s.motion_amplitude = j["motion_amplitude"].get<double>();
  s.duration_s = j.at("duration_s").get<double>();
  s.frame_rate = j.at("frame_rate").get<double>();
  s.static_duration_s = j.at("static_duration_s").get<double>();
  s.pixel_noise = j.at("pixel_noise").get<double>();
  s.marker_noise_m = j.at("marker_noise_m").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.subject.seed = j.at("subject_seed").get<std::uint64_t>();
  s.subject.scale_sigma = j.at("scale_sigma").get<double>();
  s.subject.clip_low = j.at("scale_clip_low").get<double>();
  s.subject.clip_high = j.at("scale_clip_high").get<double>();
  const json& rig = j.at("rig");
  s.rig.distance_m = rig.at("distance_m").get<double>();
  s.rig.height_m = rig.at("height_m").get<double>();
  s.rig.height_jitter_m = rig.at("height_jitter_m").get<double>();
  s.rig.azimuth_jitter_deg = rig.at("azimuth_jitter_deg").get<double>();
  s.rig.target_jitter_m = rig.at("target_jitter_m").get<double>();
  s.rig.focal_length_mm = rig.at("focal_length_mm").get<double>();
  s.rig.sensor_width_mm = rig.at("sensor_width_mm").get<double>();
  s.rig.image_width_px = rig.at("image_width_px").get<int>();
  s.rig.image_height_px = rig.at("image_height_px").get<int>();
  return clip;
}

void write_clip_meta(const std::string& path, const NamedClip& clip, const ClipObservation& obs) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << "kinefit-clip 1\n";
  out << "name " << clip.name << "\n";
  out << "subject " << clip.subject << "\n";
  out << "motion " << motion_kind_name(clip.spec.motion) << "\n";
  out << "frame_rate " << format_double(clip.spec.frame_rate, 17) << "\n";
  out << "frames " << obs.truth_motion.frame_count() << "\n";
  out << "static_frames " << obs.static_frames << "\n";
  out << "pixel_noise " << format_double(clip.spec.pixel_noise, 17) << "\n";
  out << "marker_noise_m " << format_double(clip.spec.marker_noise_m, 17) << "\n";
  out << "seed " << clip.spec.seed << "\n";
  if (obs.range_clamp_warnings)
    out << "range_clamp_warnings " << obs.range_clamp_warnings << "\n";
}

void write_clip_dir(const SkeletalModel& model, const NamedClip& clip,
                    const ClipObservation& obs, const fs::path& dir) {
  fs::create_directories(dir);
  write_motion_csv((dir / "motion.csv").string(), obs.truth_motion, model);
  write_scales_csv((dir / "scales.csv").string(), obs.truth_scales, model);
  write_points3d_csv((dir / "markers3d.csv").string(), obs.markers_3d);
  write_keypoints2d_csv((dir / "kp2d_frontal.csv").string(), obs.view_frontal);
  write_keypoints2d_csv((dir / "kp2d_sagittal.csv").string(), obs.view_sagittal);
  write_camera_file((dir / "frontal.kcam").string(), obs.cam_frontal);
  write_camera_file((dir / "sagittal.kcam").string(), obs.cam_sagittal);
  write_clip_meta((dir / "clip.meta").string(), clip, obs);
}

}  // namespace

std::string write_dataset(const SkeletalModel& model, const std::vector<NamedClip>& clips,
                          const std::string& out_dir, int jobs) {
  if (clips.empty()) fail(ErrorKind::Usage, "write_dataset: no clips");
  fs::create_directories(out_dir);

  for (size_t i = 0; i < clips.size(); ++i)
    for (size_t k = i + 1; k < clips.size(); ++k)
      if (clips[i].name == clips[k].name)
        fail(ErrorKind::Usage, "write_dataset: duplicate clip name '" + clips[i].name + "'");

  // Render in parallel, write sequentially; file bytes depend only on specs.
  std::vector<ClipObservation> observations(clips.size());
  const int workers = std::max(1, jobs);
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (size_t i = next.fetch_add(1); i < clips.size(); i = next.fetch_add(1))
          observations[i] = render_clip(model, clips[i].spec);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  json manifest;
  manifest["format"] = "kinefit-dataset";
  manifest["version"] = 1;
  json clip_list = json::array();
  std::vector<std::string> subjects;
  for (size_t i = 0; i < clips.size(); ++i) {
    write_clip_dir(model, clips[i], observations[i], fs::path(out_dir) / clips[i].name);
    clip_list.push_back(spec_to_json(clips[i]));
    if (std::find(subjects.begin(), subjects.end(), clips[i].subject) == subjects.end())
      subjects.push_back(clips[i].subject);
  }
  manifest["clips"] = clip_list;
  manifest["subjects"] = subjects;

  const SubjectSplit split = split_subjects(static_cast<int>(subjects.size()));
  json splits;
  auto names_of = [&](const std::vector<int>& idx) {
    json arr = json::array();
    for (int i : idx) arr.push_back(subjects[i]);
    return arr;
  };
  splits["train"] = names_of(split.train);
  splits["val"] = names_of(split.val);
  splits["test"] = names_of(split.test);
  manifest["subject_splits"] = splits;

  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  write_text_file(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

std::string generate_dataset(const SkeletalModel& model, const DatasetSpec& spec,
                             const std::string& out_dir, int jobs) {
  if (spec.subjects < 1 || spec.clips_per_subject < 1)
    fail(ErrorKind::Usage, "dataset needs at least one subject and one clip per subject");

  static const MotionKind kKinds[] = {MotionKind::Gait, MotionKind::Squat, MotionKind::ArmWave};
  std::vector<NamedClip> clips;
  for (int s = 0; s < spec.subjects; ++s) {
    char subject_name[32];
    std::snprintf(subject_name, sizeof(subject_name), "s%03d", s);
    const std::uint64_t subject_seed = mix_seed(spec.seed, 0x5315 + s);
    for (int c = 0; c < spec.clips_per_subject; ++c) {
      NamedClip clip;
      clip.subject = subject_name;
      clip.spec.motion = kKinds[c % 3];
      char clip_name[64];
      std::snprintf(clip_name, sizeof(clip_name), "%s_c%03d_%s", subject_name, c,
                    motion_kind_name(clip.spec.motion));
      clip.name = clip_name;
      clip.spec.subject.seed = subject_seed;
      clip.spec.duration_s = spec.duration_s;
      clip.spec.frame_rate = spec.frame_rate;
      clip.spec.pixel_noise = spec.pixel_noise;
      clip.spec.marker_noise_m = spec.marker_noise_m;
      clip.spec.seed = mix_seed(spec.seed, 0xc11b + 1000 * s + c);
      clip.spec.rig = spec.rig;
      clips.push_back(std::move(clip));
    }
  }
  return write_dataset(model, clips, out_dir, jobs);
}

std::string regenerate_dataset(const SkeletalModel& model, const std::string& manifest_path,
                               const std::string& out_dir, int jobs) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, "manifest '" + manifest_path + "': " + e.what());
  }
  if (!manifest.contains("format") || manifest["format"] != "kinefit-dataset")
    fail(ErrorKind::Parse, "'" + manifest_path + "' is not a kinefit dataset manifest");
  std::vector<NamedClip> clips;
  try {
    for (const auto& j : manifest.at("clips")) clips.push_back(spec_from_json(j));
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, "manifest '" + manifest_path + "': " + e.what());
  }
  return write_dataset(model, clips, out_dir, jobs);
}

ClipMeta read_clip_meta(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  ClipMeta meta;
  std::string line;
  bool magic = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "kinefit-clip") magic = true;
    else if (key == "name") ls >> meta.name;
    else if (key == "subject") ls >> meta.subject;
    else if (key == "motion") ls >> meta.motion;
    else if (key == "frame_rate") ls >> meta.frame_rate;
    else if (key == "frames") ls >> meta.frames;
    else if (key == "static_frames") ls >> meta.static_frames;
    else if (key == "pixel_noise") ls >> meta.pixel_noise;
    else if (key == "marker_noise_m") ls >> meta.marker_noise_m;
    else if (key == "seed") ls >> meta.seed;
  }
  if (!magic) fail(ErrorKind::Parse, "'" + path + "' is not a kinefit clip meta file");
  return meta;
}

SubjectSplit split_subjects(int subject_count) {
  SubjectSplit split;
  if (subject_count <= 0) return split;
  // 42:6:8 proportions, largest-remainder rounding, every part nonempty when
  // there are enough subjects.
  int n_train = static_cast<int>(std::lround(subject_count * 42.0 / 56.0));
  int n_val = static_cast<int>(std::lround(subject_count * 6.0 / 56.0));
  n_train = std::min(n_train, subject_count);
  n_val = std::min(n_val, subject_count - n_train);
  int n_test = subject_count - n_train - n_val;
  if (subject_count >= 3 && n_test == 0) {
    n_test = 1;
    (n_train > n_val ? n_train : n_val) -= 1;
  }
  if (subject_count >= 3 && n_val == 0 && n_train > 1) {
    n_val = 1;
    n_train -= 1;
  }
  for (int i = 0; i < n_train; ++i) split.train.push_back(i);
  for (int i = 0; i < n_val; ++i) split.val.push_back(n_train + i);
  for (int i = 0; i < n_test; ++i) split.test.push_back(n_train + n_val + i);
  return split;
}

}  // namespace kinefit
