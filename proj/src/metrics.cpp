#include "kinefit/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "kinefit/camera.hpp"

namespace kinefit {

namespace {

double wrap_pi(double d) {
  double r = std::remainder(d, 2.0 * M_PI);
  if (r <= -M_PI) r = M_PI;  // land on (-pi, pi]
  return r;
}

MatrixX3d root_relative_rows(const KeypointSet& kp, int root_index) {
  return kp.positions.rowwise() - kp.positions.row(root_index);
}

// Stacked per-sequence alignment used when per-frame alignment is disabled.
ProcrustesResult sequence_alignment(const std::vector<KeypointSet>& pred,
                                    const std::vector<KeypointSet>& truth, int root_index) {
  const int k = static_cast<int>(pred[0].positions.rows());
  MatrixX3d src(static_cast<int>(pred.size()) * k, 3);
  MatrixX3d tgt(src.rows(), 3);
  for (size_t t = 0; t < pred.size(); ++t) {
    src.middleRows(static_cast<int>(t) * k, k) = root_relative_rows(pred[t], root_index);
    tgt.middleRows(static_cast<int>(t) * k, k) = root_relative_rows(truth[t], root_index);
  }
  return procrustes_align(src, tgt, true);
}

void check_sequences(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    fail(ErrorKind::Dimension, "keypoint sequences differ in length or are empty");
  for (size_t t = 0; t < pred.size(); ++t)
    if (pred[t].positions.rows() != truth[t].positions.rows())
      fail(ErrorKind::Dimension, "keypoint sets differ in size at frame " + std::to_string(t));
}

}  // namespace

double mae_angle(const MotionSequence& pred, const MotionSequence& truth,
                 const std::vector<int>& coord_subset) {
  if (pred.frame_count() != truth.frame_count() || pred.frame_count() == 0)
    fail(ErrorKind::Dimension, "mae_angle: sequence length mismatch");
  if (pred.values.cols() != truth.values.cols())
    fail(ErrorKind::Dimension, "mae_angle: coordinate count mismatch");
  if (coord_subset.empty()) fail(ErrorKind::Usage, "mae_angle: empty coordinate subset");

  double sum = 0.0;
  for (int t = 0; t < pred.frame_count(); ++t)
    for (int c : coord_subset) sum += std::abs(wrap_pi(pred.values(t, c) - truth.values(t, c)));
  return deg_from_rad(sum / (static_cast<double>(pred.frame_count()) * coord_subset.size()));
}

double pa_mpjpe(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& truth,
                int root_index, bool per_frame_alignment) {
  check_sequences(pred, truth);
  double sum = 0.0;
  long count = 0;
  ProcrustesResult seq_align;
  if (!per_frame_alignment) seq_align = sequence_alignment(pred, truth, root_index);

  for (size_t t = 0; t < pred.size(); ++t) {
    const MatrixX3d src = root_relative_rows(pred[t], root_index);
    const MatrixX3d tgt = root_relative_rows(truth[t], root_index);
    MatrixX3d aligned;
    if (per_frame_alignment) {
      aligned = procrustes_align(src, tgt, true).aligned;
    } else {
      aligned = (seq_align.scale * (seq_align.rotation * src.transpose())).transpose();
      aligned.rowwise() += seq_align.translation.transpose();
    }
    sum += (aligned - tgt).rowwise().norm().sum();
    count += tgt.rows();
  }
  return 1000.0 * sum / static_cast<double>(count);
}

double mpjve(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& truth,
             int root_index, double frame_rate, bool per_frame_alignment) {
  check_sequences(pred, truth);
  if (pred.size() < 2) fail(ErrorKind::Dimension, "mpjve: need at least two frames");
  if (!(frame_rate > 0)) fail(ErrorKind::Usage, "mpjve: frame rate must be positive");

  const int k = static_cast<int>(pred[0].positions.rows());
  ProcrustesResult seq_align;
  if (!per_frame_alignment) seq_align = sequence_alignment(pred, truth, root_index);

  std::vector<MatrixX3d> ap(pred.size()), at(pred.size());
  for (size_t t = 0; t < pred.size(); ++t) {
    const MatrixX3d src = root_relative_rows(pred[t], root_index);
    at[t] = root_relative_rows(truth[t], root_index);
    if (per_frame_alignment) {
      ap[t] = procrustes_align(src, at[t], true).aligned;
    } else {
      ap[t] = (seq_align.scale * (seq_align.rotation * src.transpose())).transpose();
      ap[t].rowwise() += seq_align.translation.transpose();
    }
  }

  double sum = 0.0;
  for (size_t t = 0; t + 1 < pred.size(); ++t) {
    const MatrixX3d vp = (ap[t + 1] - ap[t]) * frame_rate;
    const MatrixX3d vt = (at[t + 1] - at[t]) * frame_rate;
    sum += (vp - vt).rowwise().norm().sum();
  }
  return 1000.0 * sum / (static_cast<double>(pred.size() - 1) * k);
}

static ClipMetrics dataset_mean_of(const std::vector<ClipMetrics>& clips) {
  ClipMetrics mean;
  mean.clip = "mean";
  if (clips.empty()) return mean;
  for (const auto& c : clips) {
    mean.mae_angle_deg += c.mae_angle_deg;
    mean.pa_mpjpe_mm += c.pa_mpjpe_mm;
    mean.mpjve_mm_s += c.mpjve_mm_s;
  }
  const double n = static_cast<double>(clips.size());
  mean.mae_angle_deg /= n;
  mean.pa_mpjpe_mm /= n;
  mean.mpjve_mm_s /= n;
  return mean;
}

ClipMetrics EvaluationReport::dataset_mean() const { return dataset_mean_of(clips); }

std::string EvaluationReport::to_text() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-24s %14s %14s %14s\n", "clip", "MAE_angle_deg",
                "PA_MPJPE_mm", "MPJVE_mm_s");
  os << buf;
  auto row = [&](const ClipMetrics& m) {
    std::snprintf(buf, sizeof(buf), "%-24s %14.4f %14.4f %14.4f\n", m.clip.c_str(),
                  m.mae_angle_deg, m.pa_mpjpe_mm, m.mpjve_mm_s);
    os << buf;
  };
  for (const auto& c : clips) row(c);
  row(dataset_mean());
  return os.str();
}

std::string EvaluationReport::to_csv() const {
  std::ostringstream os;
  os << "clip,MAE_angle_deg,PA_MPJPE_mm,MPJVE_mm_s\n";
  char buf[200];
  auto row = [&](const ClipMetrics& m) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g\n", m.clip.c_str(), m.mae_angle_deg,
                  m.pa_mpjpe_mm, m.mpjve_mm_s);
    os << buf;
  };
  for (const auto& c : clips) row(c);
  row(dataset_mean());
  return os.str();
}

EvaluationReport EvaluationReport::from_csv(const std::string& csv_text) {
  EvaluationReport report;
  std::istringstream in(csv_text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ls(line);
    ClipMetrics m;
    std::string field;
    if (!std::getline(ls, m.clip, ',')) fail(ErrorKind::Parse, "report csv: missing clip column");
    try {
      std::getline(ls, field, ',');
      m.mae_angle_deg = std::stod(field);
      std::getline(ls, field, ',');
      m.pa_mpjpe_mm = std::stod(field);
      std::getline(ls, field, ',');
      m.mpjve_mm_s = std::stod(field);
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, "report csv: malformed numeric field in line '" + line + "'");
    }
    if (m.clip != "mean") report.clips.push_back(std::move(m));
  }
  return report;
}

ClipMetrics evaluate_clip(const SkeletalModel& model, const std::string& clip_name,
                          const MotionSequence& pred_motion, const ScaleSet& pred_scales,
                          const MotionSequence& truth_motion, const ScaleSet& truth_scales) {
  if (pred_motion.frame_count() != truth_motion.frame_count())
    fail(ErrorKind::Dimension, "evaluate_clip: clip lengths differ");

  std::vector<int> rotational;
  for (int c = 0; c < model.coordinate_count(); ++c)
    if (model.coordinates[c].kind == CoordKind::Rotation) rotational.push_back(c);

  ClipMetrics m;
  m.clip = clip_name;
  m.mae_angle_deg = mae_angle(pred_motion, truth_motion, rotational);

  std::vector<KeypointSet> pred_kp, truth_kp;
  pred_kp.reserve(pred_motion.frame_count());
  truth_kp.reserve(truth_motion.frame_count());
  for (int t = 0; t < pred_motion.frame_count(); ++t) {
    pred_kp.push_back(forward_kinematics(model, pred_motion.pose(t), pred_scales));
    truth_kp.push_back(forward_kinematics(model, truth_motion.pose(t), truth_scales));
  }
  const int root = model.root_segment();
  m.pa_mpjpe_mm = pa_mpjpe(pred_kp, truth_kp, root);
  m.mpjve_mm_s = mpjve(pred_kp, truth_kp, root, truth_motion.frame_rate);
  return m;
}

}  // namespace kinefit
