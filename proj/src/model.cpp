#include "kinefit/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace kinefit {

std::string ValidationReport::to_text() const {
  if (ok()) return "ok\n";
  std::ostringstream os;
  for (const auto& v : violations) os << "violation: " << v << "\n";
  return os.str();
}

int SkeletalModel::root_segment() const {
  int root = -1;
  for (int i = 0; i < segment_count(); ++i) {
    if (segments[i].parent < 0) {
      if (root >= 0) fail(ErrorKind::Validation, "multiple root segments");
      root = i;
    }
  }
  if (root < 0) fail(ErrorKind::Validation, "no root segment");
  return root;
}

int SkeletalModel::coordinate_index(const std::string& n) const {
  for (int i = 0; i < coordinate_count(); ++i)
    if (coordinates[i].name == n) return i;
  return -1;
}

int SkeletalModel::segment_index(const std::string& n) const {
  for (int i = 0; i < segment_count(); ++i)
    if (segments[i].name == n) return i;
  return -1;
}

int SkeletalModel::marker_index(const std::string& n) const {
  for (int i = 0; i < marker_count(); ++i)
    if (markers[i].name == n) return i;
  return -1;
}

int SkeletalModel::owner_segment(int coord) const {
  for (int s = 0; s < segment_count(); ++s)
    for (int c : segments[s].coordinates)
      if (c == coord) return s;
  return -1;
}

std::vector<std::string> SkeletalModel::keypoint_labels() const {
  std::vector<std::string> labels;
  labels.reserve(keypoint_count());
  for (const auto& s : segments) labels.push_back(s.name + "_jc");
  for (const auto& s : segments) labels.push_back(s.name + "_mc");
  return labels;
}

Eigen::VectorXd SkeletalModel::default_pose_values() const {
  Eigen::VectorXd v(coordinate_count());
  for (int i = 0; i < coordinate_count(); ++i) v[i] = coordinates[i].default_value;
  return v;
}

bool SkeletalModel::is_ancestor_or_self(int ancestor, int segment) const {
  int s = segment;
  int guard = 0;
  while (s >= 0) {
    if (s == ancestor) return true;
    s = segments[s].parent;
    if (++guard > segment_count()) return false;  // cycle; validation reports it
  }
  return false;
}

namespace {

bool tree_is_acyclic_single_root(const SkeletalModel& m, std::string* problem) {
  int roots = 0;
  for (const auto& s : m.segments)
    if (s.parent < 0) ++roots;
  if (roots != 1) {
    *problem = roots == 0 ? "no root segment (every segment has a parent)"
                          : "multiple root segments";
    return false;
  }
  // Walk each parent chain with a step budget; exceeding it means a cycle.
  for (int i = 0; i < m.segment_count(); ++i) {
    int s = i, steps = 0;
    while (s >= 0) {
      s = m.segments[s].parent;
      if (++steps > m.segment_count()) {
        *problem = "cycle detected through segment '" + m.segments[i].name + "'";
        return false;
      }
    }
  }
  return true;
}

}  // namespace

ValidationReport validate_model(const SkeletalModel& m) {
  ValidationReport report;
  auto add = [&](const std::string& v) { report.violations.push_back(v); };

  std::string tree_problem;
  if (!tree_is_acyclic_single_root(m, &tree_problem)) add(tree_problem);

  std::set<std::string> seen;
  for (const auto& c : m.coordinates)
    if (!seen.insert(c.name).second) add("duplicate coordinate name '" + c.name + "'");
  seen.clear();
  for (const auto& s : m.segments)
    if (!seen.insert(s.name).second) add("duplicate segment name '" + s.name + "'");

  for (const auto& c : m.coordinates) {
    if (c.cls == CoordClass::Constrained) {
      if (!c.range) {
        add("constrained coordinate '" + c.name + "' has no range");
      } else if (!(c.range->first < c.range->second)) {
        add("coordinate '" + c.name + "' range is degenerate or inverted");
      } else if (c.default_value < c.range->first || c.default_value > c.range->second) {
        add("coordinate '" + c.name + "' default value lies outside its range");
      }
    } else if (c.range) {
      add("free coordinate '" + c.name + "' declares a range");
    }
  }

  // Coordinate ownership: each coordinate referenced by exactly one segment.
  std::vector<int> refs(m.coordinate_count(), 0);
  for (const auto& s : m.segments) {
    int rotations = 0;
    for (int c : s.coordinates) {
      if (c < 0 || c >= m.coordinate_count()) {
        add("segment '" + s.name + "' references an unknown coordinate");
        continue;
      }
      refs[c]++;
      const Coordinate& coord = m.coordinates[c];
      if (coord.kind == CoordKind::Rotation) ++rotations;
      if (coord.kind == CoordKind::Translation && s.parent >= 0)
        add("translation coordinate '" + coord.name + "' on non-root segment '" + s.name + "'");
    }
    if (s.coordinates.size() > 6)
      add("segment '" + s.name + "' has more than 6 coordinates");
    if (static_cast<int>(s.rotation_axes.size()) != rotations)
      add("segment '" + s.name + "' axis count does not match its rotational coordinates");
    for (size_t a = 0; a < s.rotation_axes.size(); ++a) {
      if (std::abs(s.rotation_axes[a].norm() - 1.0) > 1e-9)
        add("segment '" + s.name + "' rotation axis " + std::to_string(a) + " is not unit length");
    }
  }
  for (int c = 0; c < m.coordinate_count(); ++c) {
    if (refs[c] == 0) add("coordinate '" + m.coordinates[c].name + "' not referenced by any segment");
    if (refs[c] > 1) add("coordinate '" + m.coordinates[c].name + "' referenced by multiple segments");
  }

  std::set<std::string> marker_names;
  auto keypoints = m.keypoint_labels();
  for (const auto& mk : m.markers) {
    if (mk.segment < 0 || mk.segment >= m.segment_count())
      add("marker '" + mk.name + "' attached to unknown segment");
    if (!marker_names.insert(mk.name).second)
      add("duplicate marker name '" + mk.name + "'");
    if (std::find(keypoints.begin(), keypoints.end(), mk.name) != keypoints.end())
      add("marker '" + mk.name + "' collides with a keypoint label");
  }

  // Declared counts, when present, must match the parsed content.
  for (const auto& [what, n] : m.declared_counts) {
    int actual = -1;
    if (what == "coordinates") actual = m.coordinate_count();
    else if (what == "segments") actual = m.segment_count();
    else if (what == "keypoints") actual = m.keypoint_count();
    else if (what == "markers") actual = m.marker_count();
    else if (what == "free_rotations") {
      actual = 0;
      for (const auto& c : m.coordinates)
        if (c.cls == CoordClass::Free && c.kind == CoordKind::Rotation) ++actual;
    } else {
      add("unknown declared count '" + what + "'");
      continue;
    }
    if (actual != n)
      add("declared " + what + " count " + std::to_string(n) + " but model has " +
          std::to_string(actual));
  }

  return report;
}

ValidationReport validate_scales(const ScaleSet& scales, const SkeletalModel& model,
                                 double low, double high) {
  ValidationReport report;
  if (scales.segment_count() != model.segment_count()) {
    report.violations.push_back("scale set has " + std::to_string(scales.segment_count()) +
                                " rows for " + std::to_string(model.segment_count()) +
                                " segments");
    return report;
  }
  for (int s = 0; s < scales.segment_count(); ++s) {
    for (int a = 0; a < 3; ++a) {
      double f = scales.factors(s, a);
      if (!(f > 0.0))
        report.violations.push_back("scale factor for segment '" + model.segments[s].name +
                                    "' axis " + std::to_string(a) + " is not positive");
      else if (f < low || f > high)
        report.violations.push_back("scale factor for segment '" + model.segments[s].name +
                                    "' axis " + std::to_string(a) + " outside [" +
                                    std::to_string(low) + ", " + std::to_string(high) + "]");
    }
  }
  return report;
}

FreeConstrainedSplit free_constrained_split(const SkeletalModel& model) {
  FreeConstrainedSplit split;
  for (int i = 0; i < model.coordinate_count(); ++i) {
    const Coordinate& c = model.coordinates[i];
    if (c.cls == CoordClass::Constrained)
      split.constrained.push_back(i);
    else if (c.kind == CoordKind::Rotation)
      split.free_rotational.push_back(i);
  }
  return split;
}

}  // namespace kinefit
