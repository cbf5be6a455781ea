#include "kinefit/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace kinefit {

std::string format_double(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ls(line);
  while (std::getline(ls, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

double to_number(const std::string& s, const std::string& path, int line) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, path + ":" + std::to_string(line) + ": expected a number, got '" + s + "'");
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  return in;
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream in = open_in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  open_out(path) << content;
}

// ---- motion ------------------------------------------------------------------

void write_motion_csv(const std::string& path, const MotionSequence& motion,
                      const SkeletalModel& model) {
  if (motion.values.cols() != model.coordinate_count())
    fail(ErrorKind::Dimension, "motion does not match model coordinate count");
  std::ofstream out = open_out(path);
  out << "time";
  for (const auto& c : model.coordinates) out << "," << c.name;
  out << "\n";
  for (int t = 0; t < motion.frame_count(); ++t) {
    out << format_double(t / motion.frame_rate);
    for (int c = 0; c < model.coordinate_count(); ++c) {
      const double v = motion.values(t, c);
      out << ","
          << format_double(model.coordinates[c].kind == CoordKind::Rotation ? deg_from_rad(v)
                                                                            : v);
    }
    out << "\n";
  }
}

MotionSequence read_motion_csv(const std::string& path, const SkeletalModel& model) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Parse, path + ": empty motion file");
  const auto header = split_csv_line(line);
  if (header.size() != static_cast<size_t>(model.coordinate_count()) + 1 || header[0] != "time")
    fail(ErrorKind::Parse, path + ": motion header must be 'time' followed by the " +
                               std::to_string(model.coordinate_count()) + " coordinate names");
  for (int c = 0; c < model.coordinate_count(); ++c)
    if (header[c + 1] != model.coordinates[c].name)
      fail(ErrorKind::Parse, path + ": column '" + header[c + 1] + "' does not match coordinate '" +
                                 model.coordinates[c].name + "'");

  std::vector<Eigen::VectorXd> rows;
  std::vector<double> times;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": wrong field count");
    times.push_back(to_number(fields[0], path, line_no));
    Eigen::VectorXd row(model.coordinate_count());
    for (int c = 0; c < model.coordinate_count(); ++c) {
      const double v = to_number(fields[c + 1], path, line_no);
      row[c] = model.coordinates[c].kind == CoordKind::Rotation ? rad_from_deg(v) : v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::Parse, path + ": motion file has no frames");

  MotionSequence motion;
  motion.values.resize(rows.size(), model.coordinate_count());
  for (size_t t = 0; t < rows.size(); ++t) motion.values.row(t) = rows[t].transpose();
  motion.frame_rate =
      times.size() > 1 ? (times.size() - 1) / (times.back() - times.front()) : 60.0;
  return motion;
}

// ---- scales ------------------------------------------------------------------

void write_scales_csv(const std::string& path, const ScaleSet& scales,
                      const SkeletalModel& model) {
  if (scales.segment_count() != model.segment_count())
    fail(ErrorKind::Dimension, "scales do not match model segment count");
  std::ofstream out = open_out(path);
  out << "segment,sx,sy,sz\n";
  for (int s = 0; s < model.segment_count(); ++s)
    out << model.segments[s].name << "," << format_double(scales.factors(s, 0), 17) << ","
        << format_double(scales.factors(s, 1), 17) << ","
        << format_double(scales.factors(s, 2), 17) << "\n";
}

ScaleSet read_scales_csv(const std::string& path, const SkeletalModel& model) {
  std::ifstream in = open_in(path);
  std::string line;
  std::getline(in, line);  // header
  ScaleSet scales = ScaleSet::ones(model.segment_count());
  std::vector<char> seen(model.segment_count(), 0);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 4)
      fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": expected 4 fields");
    const int s = model.segment_index(fields[0]);
    if (s < 0)
      fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": unknown segment '" +
                                 fields[0] + "'");
    for (int a = 0; a < 3; ++a) scales.factors(s, a) = to_number(fields[a + 1], path, line_no);
    seen[s] = 1;
  }
  for (int s = 0; s < model.segment_count(); ++s)
    if (!seen[s])
      fail(ErrorKind::Parse, path + ": no scale row for segment '" + model.segments[s].name + "'");
  return scales;
}

// ---- 2D keypoints --------------------------------------------------------------

void write_keypoints2d_csv(const std::string& path, const ViewTrack2d& track) {
  std::ofstream out = open_out(path);
  out << "frame,label,u,v,confidence\n";
  for (int t = 0; t < track.frame_count(); ++t)
    for (int l = 0; l < track.label_count(); ++l)
      out << t << "," << track.labels[l] << "," << format_double(track.u(t, l)) << ","
          << format_double(track.v(t, l)) << "," << format_double(track.confidence(t, l))
          << "\n";
}

ViewTrack2d read_keypoints2d_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::getline(in, line);  // header
  struct Obs {
    int frame;
    std::string label;
    double u, v, c;
  };
  std::vector<Obs> observations;
  std::vector<std::string> labels;
  std::map<std::string, int> label_index;
  int max_frame = -1;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 5)
      fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": expected 5 fields");
    Obs o;
    o.frame = static_cast<int>(to_number(fields[0], path, line_no));
    o.label = fields[1];
    o.u = to_number(fields[2], path, line_no);
    o.v = to_number(fields[3], path, line_no);
    o.c = to_number(fields[4], path, line_no);
    if (label_index.find(o.label) == label_index.end()) {
      label_index[o.label] = static_cast<int>(labels.size());
      labels.push_back(o.label);
    }
    max_frame = std::max(max_frame, o.frame);
    observations.push_back(std::move(o));
  }
  if (observations.empty()) fail(ErrorKind::Parse, path + ": no observations");

  ViewTrack2d track;
  track.labels = labels;
  track.u = Eigen::MatrixXd::Zero(max_frame + 1, labels.size());
  track.v = Eigen::MatrixXd::Zero(max_frame + 1, labels.size());
  track.confidence = Eigen::MatrixXd::Zero(max_frame + 1, labels.size());
  for (const auto& o : observations) {
    const int l = label_index[o.label];
    track.u(o.frame, l) = o.u;
    track.v(o.frame, l) = o.v;
    track.confidence(o.frame, l) = o.c;
  }
  return track;
}

// ---- 3D point tracks -------------------------------------------------------------

void write_points3d_csv(const std::string& path, const PointTracks& tracks) {
  std::ofstream out = open_out(path);
  out << "frame,label,x,y,z\n";
  for (int t = 0; t < tracks.frame_count(); ++t)
    for (size_t l = 0; l < tracks.labels.size(); ++l)
      out << t << "," << tracks.labels[l] << "," << format_double(tracks.frames[t](l, 0)) << ","
          << format_double(tracks.frames[t](l, 1)) << "," << format_double(tracks.frames[t](l, 2))
          << "\n";
}

PointTracks read_points3d_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::getline(in, line);  // header
  std::map<std::string, int> label_index;
  PointTracks tracks;
  struct Obs {
    int frame, label;
    Eigen::Vector3d p;
  };
  std::vector<Obs> observations;
  int max_frame = -1;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 5)
      fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": expected 5 fields");
    Obs o;
    o.frame = static_cast<int>(to_number(fields[0], path, line_no));
    auto it = label_index.find(fields[1]);
    if (it == label_index.end()) {
      it = label_index.emplace(fields[1], static_cast<int>(tracks.labels.size())).first;
      tracks.labels.push_back(fields[1]);
    }
    o.label = it->second;
    o.p = Eigen::Vector3d(to_number(fields[2], path, line_no), to_number(fields[3], path, line_no),
                          to_number(fields[4], path, line_no));
    max_frame = std::max(max_frame, o.frame);
    observations.push_back(std::move(o));
  }
  tracks.frames.assign(max_frame + 1, MatrixX3d::Zero(tracks.labels.size(), 3));
  for (const auto& o : observations) tracks.frames[o.frame].row(o.label) = o.p.transpose();
  return tracks;
}

// ---- camera files ------------------------------------------------------------------

void write_camera_file(const std::string& path, const Camera& cam) {
  std::ofstream out = open_out(path);
  out << "kinefit-camera 1\n";
  out << "name " << (cam.name.empty() ? "camera" : cam.name) << "\n";
  out << "focal_length_mm " << format_double(cam.focal_length_mm, 17) << "\n";
  out << "sensor_width_mm " << format_double(cam.sensor_width_mm, 17) << "\n";
  out << "image_width_px " << cam.image_width_px << "\n";
  out << "image_height_px " << cam.image_height_px << "\n";
  out << "principal_point_px " << format_double(cam.principal_point_px.x(), 17) << " "
      << format_double(cam.principal_point_px.y(), 17) << "\n";
  out << "rotation";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << " " << format_double(cam.rotation(r, c), 17);
  out << "\n";
  out << "translation " << format_double(cam.translation.x(), 17) << " "
      << format_double(cam.translation.y(), 17) << " " << format_double(cam.translation.z(), 17)
      << "\n";
}

Camera read_camera_file(const std::string& path) {
  std::ifstream in = open_in(path);
  Camera cam;
  std::string line;
  int line_no = 0;
  bool magic = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    auto number = [&]() {
      std::string tok;
      if (!(ls >> tok))
        fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": missing value");
      return to_number(tok, path, line_no);
    };
    if (key == "kinefit-camera") {
      magic = true;
    } else if (key == "name") {
      ls >> cam.name;
    } else if (key == "focal_length_mm") {
      cam.focal_length_mm = number();
    } else if (key == "sensor_width_mm") {
      cam.sensor_width_mm = number();
    } else if (key == "image_width_px") {
      cam.image_width_px = static_cast<int>(number());
    } else if (key == "image_height_px") {
      cam.image_height_px = static_cast<int>(number());
    } else if (key == "principal_point_px") {
      cam.principal_point_px.x() = number();
      cam.principal_point_px.y() = number();
    } else if (key == "rotation") {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) cam.rotation(r, c) = number();
    } else if (key == "translation") {
      for (int i = 0; i < 3; ++i) cam.translation[i] = number();
    } else {
      fail(ErrorKind::Parse, path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (!magic) fail(ErrorKind::Parse, path + ": not a kinefit camera file");
  const ValidationReport report = validate_camera(cam);
  if (!report.ok())
    fail(ErrorKind::Validation, path + ": " + report.violations.front());
  return cam;
}

// ---- SVG traces -----------------------------------------------------------------------

void write_svg_traces(const std::string& path, const std::string& title,
                      const Eigen::VectorXd& x, const std::vector<Eigen::VectorXd>& series,
                      const std::vector<std::string>& series_labels) {
  if (series.empty() || x.size() < 2) fail(ErrorKind::Usage, "svg traces need data");
  const int width = 960, height = 480, margin = 50;
  double ymin = series[0].minCoeff(), ymax = series[0].maxCoeff();
  for (const auto& s : series) {
    ymin = std::min(ymin, s.minCoeff());
    ymax = std::max(ymax, s.maxCoeff());
  }
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  const double xmin = x.minCoeff(), xmax = x.maxCoeff();

  auto px = [&](double v) { return margin + (v - xmin) / (xmax - xmin) * (width - 2 * margin); };
  auto py = [&](double v) {
    return height - margin - (v - ymin) / (ymax - ymin) * (height - 2 * margin);
  };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" "
     << "font-family=\"sans-serif\">" << title << "</text>\n";
  os << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - margin
     << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
     << height - margin << "\" stroke=\"black\"/>\n";
  for (size_t s = 0; s < series.size(); ++s) {
    os << "<polyline fill=\"none\" stroke=\"" << kColors[s % 8] << "\" stroke-width=\"1.2\" points=\"";
    for (Eigen::Index i = 0; i < x.size(); ++i)
      os << format_double(px(x[i]), 6) << "," << format_double(py(series[s][i]), 6) << " ";
    os << "\"/>\n";
    os << "<text x=\"" << width - margin + 4 << "\" y=\"" << margin + 16 * s
       << "\" font-size=\"11\" font-family=\"sans-serif\" fill=\"" << kColors[s % 8] << "\">"
       << (s < series_labels.size() ? series_labels[s] : "series") << "</text>\n";
  }
  os << "</svg>\n";
  write_text_file(path, os.str());
}

}  // namespace kinefit
