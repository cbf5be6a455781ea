#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kinefit/camera.hpp"
#include "kinefit/fitting.hpp"
#include "kinefit/io.hpp"
#include "kinefit/kinematics.hpp"
#include "kinefit/model.hpp"

namespace kinefit {

enum class MotionKind { Gait, Squat, ArmWave, Csv };
const char* motion_kind_name(MotionKind kind);
MotionKind motion_kind_from_name(const std::string& name);

/// Per-subject body shape: log-normal per-axis segment scale factors, clipped.
struct SubjectSpec {
  std::uint64_t seed = 0;
  double scale_sigma = 0.05;
  double clip_low = 0.8;
  double clip_high = 1.2;

  ScaleSet resolve(const SkeletalModel& model) const;
};

struct CameraRig {
  double distance_m = 3.8;
  double height_m = 1.1;
  double height_jitter_m = 0.1;
  double azimuth_jitter_deg = 5.0;
  double target_jitter_m = 0.05;
  double focal_length_mm = 33.0;
  double sensor_width_mm = 36.0;
  int image_width_px = 1080;
  int image_height_px = 720;
};

struct ClipSpec {
  SubjectSpec subject;
  MotionKind motion = MotionKind::Gait;
  std::string motion_csv;        // for MotionKind::Csv
  double motion_amplitude = 1.0; // scales the whole deviation from the default pose
  double duration_s = 10.0;
  double frame_rate = 60.0;
  double static_duration_s = 1.0;  // static trial prepended to the clip
  double pixel_noise = 0.0;        // sigma, px
  double marker_noise_m = 0.0;     // sigma, m
  std::uint64_t seed = 0;
  CameraRig rig;
};

/// Everything a downstream pipeline consumes for one clip, with ground truth.
struct ClipObservation {
  MotionSequence truth_motion;  // static trial frames + generated motion
  ScaleSet truth_scales;
  PointTracks markers_3d;
  ViewTrack2d view_frontal;
  ViewTrack2d view_sagittal;
  Camera cam_frontal;
  Camera cam_sagittal;
  int static_frames = 0;
  int range_clamp_warnings = 0;  // imported-CSV motions only
};

/// Procedural (or imported) joint-angle trajectories, without the static
/// trial. Procedural motions stay strictly inside every coordinate range.
MotionSequence generate_motion(const SkeletalModel& model, const ClipSpec& spec);

/// Composes motion generation, forward kinematics, camera placement and
/// projection into a two-view observation with ground truth attached.
ClipObservation render_clip(const SkeletalModel& model, const ClipSpec& spec);

struct NamedClip {
  std::string name;
  std::string subject;
  ClipSpec spec;
};

/// Writes one directory per clip plus a manifest; regenerating from the same
/// manifest reproduces every file byte for byte.
std::string write_dataset(const SkeletalModel& model, const std::vector<NamedClip>& clips,
                          const std::string& out_dir, int jobs = 1);

struct DatasetSpec {
  int subjects = 2;
  int clips_per_subject = 1;
  double duration_s = 10.0;
  double frame_rate = 60.0;
  double pixel_noise = 0.0;
  double marker_noise_m = 0.0;
  std::uint64_t seed = 0;
  CameraRig rig;
};

/// Derives per-subject and per-clip seeds from the base seed, renders every
/// clip and writes the dataset. Returns the manifest path.
std::string generate_dataset(const SkeletalModel& model, const DatasetSpec& spec,
                             const std::string& out_dir, int jobs = 1);

/// Re-renders a dataset from a manifest written by generate_dataset.
std::string regenerate_dataset(const SkeletalModel& model, const std::string& manifest_path,
                               const std::string& out_dir, int jobs = 1);

/// Subject-level train/val/test partition at 42:6:8 proportions.
struct SubjectSplit {
  std::vector<int> train, val, test;
};
SubjectSplit split_subjects(int subject_count);

/// Sidecar record written next to every generated clip.
struct ClipMeta {
  std::string name;
  std::string subject;
  std::string motion;
  double frame_rate = 60.0;
  int frames = 0;
  int static_frames = 0;
  double pixel_noise = 0.0;
  double marker_noise_m = 0.0;
  std::uint64_t seed = 0;
};
ClipMeta read_clip_meta(const std::string& path);

/// Deterministic stream derivation used for all per-clip randomness.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace kinefit
