#include "kinefit/camera.hpp"

#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace kinefit {

Eigen::Matrix<double, 3, 4> Camera::projection_matrix() const {
  Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
  k(0, 0) = fx();
  k(1, 1) = fy();
  k(0, 2) = principal_point_px.x();
  k(1, 2) = principal_point_px.y();
  Eigen::Matrix<double, 3, 4> rt;
  rt.leftCols<3>() = rotation;
  rt.col(3) = translation;
  return k * rt;
}

ValidationReport validate_camera(const Camera& cam) {
  ValidationReport report;
  if (!(cam.focal_length_mm > 0)) report.violations.push_back("focal length not positive");
  if (!(cam.sensor_width_mm > 0)) report.violations.push_back("sensor width not positive");
  if (cam.image_width_px <= 0 || cam.image_height_px <= 0)
    report.violations.push_back("image resolution not positive");
  Eigen::Matrix3d rrt = cam.rotation * cam.rotation.transpose();
  if ((rrt - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    report.violations.push_back("extrinsic rotation not orthonormal");
  else if (cam.rotation.determinant() < 0)
    report.violations.push_back("extrinsic rotation is a reflection");
  return report;
}

namespace {

// Projection without the positive-depth guard; returns depth through `z`.
Eigen::Vector2d project_unchecked(const Camera& cam, const Eigen::Vector3d& p, double* z) {
  Eigen::Vector3d pc = cam.rotation * p + cam.translation;
  *z = pc.z();
  return Eigen::Vector2d(cam.fx() * pc.x() / pc.z() + cam.principal_point_px.x(),
                         cam.fy() * pc.y() / pc.z() + cam.principal_point_px.y());
}

}  // namespace

Eigen::Vector2d project(const Camera& cam, const Eigen::Vector3d& point_world) {
  Eigen::Vector3d pc = cam.rotation * point_world + cam.translation;
  if (!(pc.z() > 0))
    fail(ErrorKind::Degenerate, "point at non-positive depth in camera '" + cam.name + "'");
  return Eigen::Vector2d(cam.fx() * pc.x() / pc.z() + cam.principal_point_px.x(),
                         cam.fy() * pc.y() / pc.z() + cam.principal_point_px.y());
}

bool try_project(const Camera& cam, const Eigen::Vector3d& point_world, Eigen::Vector2d* uv) {
  double z = 0.0;
  const Eigen::Vector2d p = project_unchecked(cam, point_world, &z);
  if (!(z > 0)) return false;
  *uv = p;
  return true;
}

TriangulationResult triangulate_two_view(const Camera& cam_a, const Camera& cam_b,
                                         const Eigen::Vector2d& uv_a,
                                         const Eigen::Vector2d& uv_b) {
  if (!uv_a.allFinite() || !uv_b.allFinite())
    fail(ErrorKind::Dimension, "non-finite observation passed to triangulation");
  if ((cam_a.center() - cam_b.center()).norm() < 1e-9)
    fail(ErrorKind::Degenerate, "triangulation with coincident camera centers");

  // Backprojected ray directions; parallel rays cannot intersect the baseline.
  auto ray = [](const Camera& c, const Eigen::Vector2d& uv) {
    Eigen::Vector3d d((uv.x() - c.principal_point_px.x()) / c.fx(),
                      (uv.y() - c.principal_point_px.y()) / c.fy(), 1.0);
    return (c.rotation.transpose() * d).normalized();
  };
  if (ray(cam_a, uv_a).cross(ray(cam_b, uv_b)).norm() < 1e-9)
    fail(ErrorKind::Degenerate, "triangulation rays are parallel");

  const Eigen::Matrix<double, 3, 4> pa = cam_a.projection_matrix();
  const Eigen::Matrix<double, 3, 4> pb = cam_b.projection_matrix();
  Eigen::Matrix4d design;
  design.row(0) = uv_a.x() * pa.row(2) - pa.row(0);
  design.row(1) = uv_a.y() * pa.row(2) - pa.row(1);
  design.row(2) = uv_b.x() * pb.row(2) - pb.row(0);
  design.row(3) = uv_b.y() * pb.row(2) - pb.row(1);

  Eigen::JacobiSVD<Eigen::Matrix4d> svd(design, Eigen::ComputeFullV);
  Eigen::Vector4d xh = svd.matrixV().col(3);
  if (std::abs(xh(3)) < 1e-15)
    fail(ErrorKind::Degenerate, "triangulated point at infinity");
  Eigen::Vector3d x = xh.head<3>() / xh(3);

  auto residuals = [&](const Eigen::Vector3d& p, Eigen::Vector4d* r, Eigen::Matrix<double, 4, 3>* jac) {
    const Camera* cams[2] = {&cam_a, &cam_b};
    const Eigen::Vector2d* obs[2] = {&uv_a, &uv_b};
    for (int v = 0; v < 2; ++v) {
      const Camera& c = *cams[v];
      Eigen::Vector3d pc = c.rotation * p + c.translation;
      if (!(pc.z() > 0)) return false;
      (*r)(2 * v) = c.fx() * pc.x() / pc.z() + c.principal_point_px.x() - obs[v]->x();
      (*r)(2 * v + 1) = c.fy() * pc.y() / pc.z() + c.principal_point_px.y() - obs[v]->y();
      if (jac) {
        const double iz = 1.0 / pc.z();
        jac->row(2 * v) = c.fx() * iz * (c.rotation.row(0) - pc.x() * iz * c.rotation.row(2));
        jac->row(2 * v + 1) = c.fy() * iz * (c.rotation.row(1) - pc.y() * iz * c.rotation.row(2));
      }
    }
    return true;
  };

  Eigen::Vector4d r;
  Eigen::Matrix<double, 4, 3> jac;
  if (residuals(x, &r, &jac)) {
    // Single Gauss-Newton step; the algebraic solution is biased under noise.
    Eigen::Matrix3d jtj = jac.transpose() * jac;
    Eigen::Vector3d step = jtj.ldlt().solve(-jac.transpose() * r);
    Eigen::Vector4d r_new;
    if (step.allFinite() && residuals(x + step, &r_new, nullptr) &&
        r_new.squaredNorm() < r.squaredNorm()) {
      x += step;
      r = r_new;
    }
  } else {
    fail(ErrorKind::Degenerate, "triangulated point at non-positive depth");
  }

  TriangulationResult out;
  out.point = x;
  out.residual_px = 0.5 * (r.head<2>().norm() + r.tail<2>().norm());
  return out;
}

std::vector<Eigen::Vector3d> sample_candidate_points(const Camera& cam_a, const Camera& cam_b,
                                                     const BinaryMask& silhouette_a,
                                                     const BinaryMask& silhouette_b, int n,
                                                     const Aabb& bounds, std::uint64_t seed) {
  if (n <= 0) fail(ErrorKind::Usage, "sample count must be positive");
  if (silhouette_a.width != cam_a.image_width_px || silhouette_a.height != cam_a.image_height_px ||
      silhouette_b.width != cam_b.image_width_px || silhouette_b.height != cam_b.image_height_px)
    fail(ErrorKind::Dimension, "silhouette mask resolution does not match its camera");

  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    // 53-bit mantissa draw; avoids distribution implementation differences.
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  };

  std::vector<Eigen::Vector3d> accepted;
  accepted.reserve(n);
  const long long budget = std::max<long long>(static_cast<long long>(n) * 10000, 100000);
  for (long long attempt = 0; attempt < budget && static_cast<int>(accepted.size()) < n; ++attempt) {
    Eigen::Vector3d p(uniform(bounds.lo.x(), bounds.hi.x()), uniform(bounds.lo.y(), bounds.hi.y()),
                      uniform(bounds.lo.z(), bounds.hi.z()));
    double za = 0, zb = 0;
    Eigen::Vector2d ua = project_unchecked(cam_a, p, &za);
    Eigen::Vector2d ub = project_unchecked(cam_b, p, &zb);
    if (za <= 0 || zb <= 0) continue;
    if (silhouette_a.contains(ua) && silhouette_b.contains(ub)) accepted.push_back(p);
  }
  if (static_cast<int>(accepted.size()) < n)
    fail(ErrorKind::Numeric,
         "candidate point sampling exhausted its budget (acceptance rate below 1e-4); "
         "got " + std::to_string(accepted.size()) + " of " + std::to_string(n));
  return accepted;
}

ProcrustesResult procrustes_align(const MatrixX3d& source, const MatrixX3d& target,
                                  bool with_scale) {
  const int p = static_cast<int>(source.rows());
  if (p != target.rows())
    fail(ErrorKind::Dimension, "procrustes point sets differ in size");
  if (p < 3) fail(ErrorKind::Dimension, "procrustes needs at least 3 points");

  const Eigen::RowVector3d mean_src = source.colwise().mean();
  const Eigen::RowVector3d mean_tgt = target.colwise().mean();
  const MatrixX3d src = source.rowwise() - mean_src;
  const MatrixX3d tgt = target.rowwise() - mean_tgt;

  const double src_var = src.squaredNorm();
  if (src_var < 1e-18) fail(ErrorKind::Degenerate, "procrustes source points are coincident");

  const Eigen::Matrix3d cov = src.transpose() * tgt;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d flips = Eigen::Vector3d::Ones();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) flips(2) = -1.0;

  ProcrustesResult out;
  out.rotation = svd.matrixV() * flips.asDiagonal() * svd.matrixU().transpose();
  out.scale = with_scale ? (svd.singularValues().dot(flips)) / src_var : 1.0;
  out.translation = mean_tgt.transpose() - out.scale * out.rotation * mean_src.transpose();
  out.aligned = (out.scale * (out.rotation * source.transpose())).transpose();
  out.aligned.rowwise() += out.translation.transpose();
  out.rms = std::sqrt((out.aligned - target).rowwise().squaredNorm().mean());
  return out;
}

Camera make_look_at_camera(const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                           double focal_length_mm, double sensor_width_mm, int image_width_px,
                           int image_height_px) {
  Eigen::Vector3d forward = target - position;
  if (forward.norm() < 1e-12)
    fail(ErrorKind::Degenerate, "camera position coincides with its target");
  forward.normalize();
  Eigen::Vector3d up = Eigen::Vector3d::UnitY();
  if (std::abs(forward.dot(up)) > 1.0 - 1e-9)
    fail(ErrorKind::Degenerate, "camera looks straight along the vertical axis");
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right);

  Camera cam;
  cam.focal_length_mm = focal_length_mm;
  cam.sensor_width_mm = sensor_width_mm;
  cam.image_width_px = image_width_px;
  cam.image_height_px = image_height_px;
  cam.principal_point_px = Eigen::Vector2d(image_width_px / 2.0, image_height_px / 2.0);
  cam.rotation.row(0) = right;
  cam.rotation.row(1) = down;
  cam.rotation.row(2) = forward;
  cam.translation = -cam.rotation * position;
  return cam;
}

}  // namespace kinefit
