// Reader/writer for the .kmodel structured-text format (see docs/model_format.md).

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kinefit/model.hpp"

namespace kinefit {

namespace {

struct Line {
  int number = 0;
  std::vector<std::string> tokens;
};

std::vector<Line> tokenize(std::istream& in) {
  std::vector<Line> lines;
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    Line line;
    line.number = number;
    std::string tok;
    while (ls >> tok) line.tokens.push_back(tok);
    if (!line.tokens.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

[[noreturn]] void parse_fail(int line, const std::string& what) {
  fail(ErrorKind::Parse, "model parse error at line " + std::to_string(line) + ": " + what);
}

double parse_number(const Line& line, const std::string& tok) {
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    parse_fail(line.number, "expected a number, got '" + tok + "'");
  }
  if (used != tok.size()) parse_fail(line.number, "trailing characters in number '" + tok + "'");
  return v;
}

// Unresolved references collected during the single pass; fixed up afterwards
// so that forward references (and thus cycles) survive to validation.
struct PendingSegment {
  int line = 0;
  std::string parent_name;  // empty for root
  std::vector<std::string> coordinate_names;
};

std::string fmt(double v, int digits = 12) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

}  // namespace

SkeletalModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open model file '" + path + "'");

  auto lines = tokenize(in);
  if (lines.empty() || lines[0].tokens[0] != "kinefit-model")
    fail(ErrorKind::Parse, "'" + path + "' is not a kinefit model file (missing kinefit-model header)");
  if (lines[0].tokens.size() != 2 || lines[0].tokens[1] != "1")
    parse_fail(lines[0].number, "unsupported model format version");

  SkeletalModel model;
  std::vector<PendingSegment> pending;
  std::vector<std::pair<int, std::string>> pending_marker_segments;  // (marker idx, name)
  BodySegment* current = nullptr;

  for (size_t i = 1; i < lines.size(); ++i) {
    const Line& line = lines[i];
    const auto& t = line.tokens;
    const std::string& directive = t[0];

    if (directive == "model") {
      if (t.size() != 2) parse_fail(line.number, "model directive takes one name");
      model.name = t[1];
    } else if (directive == "expect") {
      if (t.size() != 3) parse_fail(line.number, "expect directive: expect <what> <count>");
      model.declared_counts.emplace_back(t[1], static_cast<int>(parse_number(line, t[2])));
    } else if (directive == "coordinate") {
      // coordinate <name> <rotation|translation> <free|constrained>
      //            [range <min> <max>] default <value>
      if (t.size() < 6) parse_fail(line.number, "coordinate directive too short");
      Coordinate c;
      c.name = t[1];
      if (t[2] == "rotation") c.kind = CoordKind::Rotation;
      else if (t[2] == "translation") c.kind = CoordKind::Translation;
      else parse_fail(line.number, "coordinate kind must be rotation or translation");
      if (t[3] == "free") c.cls = CoordClass::Free;
      else if (t[3] == "constrained") c.cls = CoordClass::Constrained;
      else parse_fail(line.number, "coordinate class must be free or constrained");
      size_t k = 4;
      const bool in_degrees = c.kind == CoordKind::Rotation;
      auto convert = [&](double v) { return in_degrees ? rad_from_deg(v) : v; };
      if (k + 2 < t.size() && t[k] == "range") {
        double lo = parse_number(line, t[k + 1]);
        double hi = parse_number(line, t[k + 2]);
        c.range = std::make_pair(convert(lo), convert(hi));
        k += 3;
      }
      if (k + 1 >= t.size() || t[k] != "default")
        parse_fail(line.number, "coordinate '" + c.name + "' missing default value");
      c.default_value = convert(parse_number(line, t[k + 1]));
      if (k + 2 != t.size()) parse_fail(line.number, "unexpected tokens after default value");
      if (model.coordinate_index(c.name) >= 0)
        parse_fail(line.number, "duplicate coordinate '" + c.name + "'");
      model.coordinates.push_back(std::move(c));
    } else if (directive == "segment") {
      // segment <name> root | segment <name> parent <parent name>
      if (t.size() < 3) parse_fail(line.number, "segment directive too short");
      BodySegment s;
      s.name = t[1];
      PendingSegment p;
      p.line = line.number;
      if (t[2] == "root") {
        if (t.size() != 3) parse_fail(line.number, "unexpected tokens after root");
      } else if (t[2] == "parent") {
        if (t.size() != 4) parse_fail(line.number, "segment parent takes one name");
        p.parent_name = t[3];
      } else {
        parse_fail(line.number, "segment must declare root or parent <name>");
      }
      if (model.segment_index(s.name) >= 0)
        parse_fail(line.number, "duplicate segment '" + s.name + "'");
      model.segments.push_back(std::move(s));
      pending.push_back(std::move(p));
      current = &model.segments.back();
    } else if (directive == "joint_offset" || directive == "mass_center") {
      if (!current) parse_fail(line.number, directive + " outside a segment block");
      if (t.size() != 4) parse_fail(line.number, directive + " takes three numbers");
      Eigen::Vector3d v(parse_number(line, t[1]), parse_number(line, t[2]),
                        parse_number(line, t[3]));
      if (directive == "joint_offset") {
        if (pending.back().parent_name.empty())
          parse_fail(line.number, "root segment must not declare a joint_offset");
        current->joint_offset_in_parent = v;
      } else {
        current->mass_center_offset = v;
      }
    } else if (directive == "coordinates") {
      if (!current) parse_fail(line.number, "coordinates outside a segment block");
      for (size_t k = 1; k < t.size(); ++k) pending.back().coordinate_names.push_back(t[k]);
    } else if (directive == "axes") {
      if (!current) parse_fail(line.number, "axes outside a segment block");
      if ((t.size() - 1) % 3 != 0) parse_fail(line.number, "axes takes triples of numbers");
      for (size_t k = 1; k + 2 < t.size() + 1; k += 3)
        current->rotation_axes.emplace_back(parse_number(line, t[k]),
                                            parse_number(line, t[k + 1]),
                                            parse_number(line, t[k + 2]));
    } else if (directive == "marker") {
      if (t.size() != 6) parse_fail(line.number, "marker <name> <segment> <x> <y> <z>");
      Marker mk;
      mk.name = t[1];
      mk.offset = Eigen::Vector3d(parse_number(line, t[3]), parse_number(line, t[4]),
                                  parse_number(line, t[5]));
      pending_marker_segments.emplace_back(static_cast<int>(model.markers.size()), t[2]);
      model.markers.push_back(std::move(mk));
    } else {
      parse_fail(line.number, "unknown directive '" + directive + "'");
    }
  }

  // Resolve name references.
  for (size_t s = 0; s < model.segments.size(); ++s) {
    const PendingSegment& p = pending[s];
    if (!p.parent_name.empty()) {
      int parent = model.segment_index(p.parent_name);
      if (parent < 0)
        parse_fail(p.line, "segment '" + model.segments[s].name + "' references unknown parent '" +
                               p.parent_name + "'");
      model.segments[s].parent = parent;
    }
    for (const auto& cn : p.coordinate_names) {
      int c = model.coordinate_index(cn);
      if (c < 0)
        parse_fail(p.line, "segment '" + model.segments[s].name +
                               "' references unknown coordinate '" + cn + "'");
      model.segments[s].coordinates.push_back(c);
    }
  }
  for (const auto& [idx, seg_name] : pending_marker_segments) {
    int seg = model.segment_index(seg_name);
    if (seg < 0)
      fail(ErrorKind::Parse, "marker '" + model.markers[idx].name +
                                 "' references unknown segment '" + seg_name + "'");
    model.markers[idx].segment = seg;
  }

  ValidationReport report = validate_model(model);
  if (!report.ok())
    fail(ErrorKind::Validation, "model '" + path + "' invalid: " + report.violations.front() +
                                    (report.violations.size() > 1
                                         ? " (+" + std::to_string(report.violations.size() - 1) +
                                               " more)"
                                         : ""));
  return model;
}

void save_model(const SkeletalModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write model file '" + path + "'");

  out << "kinefit-model 1\n";
  if (!model.name.empty()) out << "model " << model.name << "\n";
  for (const auto& [what, n] : model.declared_counts)
    out << "expect " << what << " " << n << "\n";
  out << "\n";

  for (const auto& c : model.coordinates) {
    const bool deg = c.kind == CoordKind::Rotation;
    auto convert = [&](double v) { return deg ? deg_from_rad(v) : v; };
    out << "coordinate " << c.name << " "
        << (c.kind == CoordKind::Rotation ? "rotation" : "translation") << " "
        << (c.cls == CoordClass::Free ? "free" : "constrained");
    if (c.range)
      out << " range " << fmt(convert(c.range->first)) << " " << fmt(convert(c.range->second));
    out << " default " << fmt(convert(c.default_value)) << "\n";
  }
  out << "\n";

  for (const auto& s : model.segments) {
    if (s.parent < 0)
      out << "segment " << s.name << " root\n";
    else
      out << "segment " << s.name << " parent " << model.segments[s.parent].name << "\n";
    if (s.parent >= 0)
      out << "joint_offset " << fmt(s.joint_offset_in_parent.x()) << " "
          << fmt(s.joint_offset_in_parent.y()) << " " << fmt(s.joint_offset_in_parent.z()) << "\n";
    out << "mass_center " << fmt(s.mass_center_offset.x()) << " " << fmt(s.mass_center_offset.y())
        << " " << fmt(s.mass_center_offset.z()) << "\n";
    if (!s.coordinates.empty()) {
      out << "coordinates";
      for (int c : s.coordinates) out << " " << model.coordinates[c].name;
      out << "\n";
      if (!s.rotation_axes.empty()) {
        out << "axes";
        for (const auto& a : s.rotation_axes)
          out << "  " << fmt(a.x(), 17) << " " << fmt(a.y(), 17) << " " << fmt(a.z(), 17);
        out << "\n";
      }
    }
    out << "\n";
  }

  for (const auto& mk : model.markers)
    out << "marker " << mk.name << " " << model.segments[mk.segment].name << " "
        << fmt(mk.offset.x()) << " " << fmt(mk.offset.y()) << " " << fmt(mk.offset.z()) << "\n";
}

}  // namespace kinefit
