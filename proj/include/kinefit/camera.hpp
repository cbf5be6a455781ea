#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kinefit/error.hpp"
#include "kinefit/model.hpp"  // ValidationReport
#include "kinefit/kinematics.hpp"  // MatrixX3d

namespace kinefit {

/// Distortion-free pinhole camera with horizontal sensor fit (square pixels,
/// fx = fy = focal / sensor width * image width) and world->camera extrinsics.
struct Camera {
  std::string name;
  double focal_length_mm = 33.0;
  double sensor_width_mm = 36.0;
  int image_width_px = 1080;
  int image_height_px = 720;
  Eigen::Vector2d principal_point_px = Eigen::Vector2d(540.0, 360.0);
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();   // world -> camera
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  double fx() const { return focal_length_mm / sensor_width_mm * image_width_px; }
  double fy() const { return fx(); }
  Eigen::Vector3d center() const { return -rotation.transpose() * translation; }
  Eigen::Matrix<double, 3, 4> projection_matrix() const;
  bool in_frame(const Eigen::Vector2d& uv) const {
    return uv.x() >= 0 && uv.x() < image_width_px && uv.y() >= 0 && uv.y() < image_height_px;
  }
};

ValidationReport validate_camera(const Camera& cam);

/// Pinhole projection to pixel coordinates; the point must have positive depth.
Eigen::Vector2d project(const Camera& cam, const Eigen::Vector3d& point_world);

/// Non-throwing projection; returns false when the point has non-positive
/// depth (uv is left untouched).
bool try_project(const Camera& cam, const Eigen::Vector3d& point_world, Eigen::Vector2d* uv);

struct TriangulationResult {
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  double residual_px = 0.0;  // mean reprojection error over the two views
};

/// Linear two-view triangulation (DLT on the stacked 4x4 system) followed by
/// one Gauss-Newton reprojection refinement step.
TriangulationResult triangulate_two_view(const Camera& cam_a, const Camera& cam_b,
                                         const Eigen::Vector2d& uv_a,
                                         const Eigen::Vector2d& uv_b);

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major, nonzero = inside

  static BinaryMask full(int w, int h) { return BinaryMask{w, h, std::vector<std::uint8_t>(static_cast<size_t>(w) * h, 1)}; }
  static BinaryMask empty(int w, int h) { return BinaryMask{w, h, std::vector<std::uint8_t>(static_cast<size_t>(w) * h, 0)}; }

  std::uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  bool contains(const Eigen::Vector2d& uv) const {
    int x = static_cast<int>(std::floor(uv.x()));
    int y = static_cast<int>(std::floor(uv.y()));
    if (x < 0 || y < 0 || x >= width || y >= height) return false;
    return data[static_cast<size_t>(y) * width + x] != 0;
  }
};

struct Aabb {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Zero();
};

/// Uniform rejection sampling of world points whose projections land inside
/// both silhouette masks. Deterministic per seed.
std::vector<Eigen::Vector3d> sample_candidate_points(const Camera& cam_a, const Camera& cam_b,
                                                     const BinaryMask& silhouette_a,
                                                     const BinaryMask& silhouette_b, int n,
                                                     const Aabb& bounds, std::uint64_t seed);

struct ProcrustesResult {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double scale = 1.0;
  MatrixX3d aligned;   // scale * R * source + t
  double rms = 0.0;    // RMS point distance after alignment
};

/// Closed-form orthogonal Procrustes (SVD of the centered cross-covariance);
/// reflections are excluded. scale is fixed to 1 unless with_scale is set.
ProcrustesResult procrustes_align(const MatrixX3d& source, const MatrixX3d& target,
                                  bool with_scale);

/// Camera positioned at `position` looking at `target` with world +Y up and
/// image v growing downward.
Camera make_look_at_camera(const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                           double focal_length_mm = 33.0, double sensor_width_mm = 36.0,
                           int image_width_px = 1080, int image_height_px = 720);

}  // namespace kinefit
