#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include <Eigen/Geometry>

#include "kinefit/camera.hpp"

using namespace kinefit;

namespace {

struct Draw {
  std::mt19937_64 rng;
  explicit Draw(std::uint64_t seed) : rng(seed) {}
  double uniform(double lo, double hi) {
    return lo + (static_cast<double>(rng() >> 11) * 0x1.0p-53) * (hi - lo);
  }
  double gaussian() {
    const double u1 = std::max(uniform(0, 1), 1e-300);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * uniform(0, 1));
  }
  Eigen::Matrix3d rotation() {
    const Eigen::Vector3d axis =
        Eigen::Vector3d(gaussian(), gaussian(), gaussian()).normalized();
    return Eigen::AngleAxisd(uniform(-M_PI, M_PI), axis).toRotationMatrix();
  }
};

// The two-view rig used throughout: frontal and side cameras 3.5 m from a
// target at standing height.
std::pair<Camera, Camera> paper_rig() {
  const Eigen::Vector3d target(0, 1.0, 0);
  Camera a = make_look_at_camera({3.5, 1.1, 0}, target);
  Camera b = make_look_at_camera({0, 1.1, 3.5}, target);
  a.name = "frontal";
  b.name = "sagittal";
  return {a, b};
}

}  // namespace

TEST_CASE("horizontal sensor fit gives fx = 990 px for the 33/36/1080 configuration") {
  Camera cam;
  cam.focal_length_mm = 33.0;
  cam.sensor_width_mm = 36.0;
  cam.image_width_px = 1080;
  CHECK(cam.fx() == doctest::Approx(990.0).epsilon(1e-12));
  CHECK(cam.fy() == doctest::Approx(990.0).epsilon(1e-12));
}

TEST_CASE("points on the optical axis project to the principal point") {
  auto [cam, other] = paper_rig();
  for (double depth : {0.5, 1.0, 4.0, 100.0}) {
    const Eigen::Vector3d p =
        cam.center() + cam.rotation.row(2).transpose() * depth;  // along the view axis
    const Eigen::Vector2d uv = project(cam, p);
    CHECK((uv - cam.principal_point_px).norm() < 1e-9);
  }
}

TEST_CASE("projection rejects points at or behind the camera center") {
  auto [cam, other] = paper_rig();
  CHECK_THROWS_AS(project(cam, cam.center()), Error);
  const Eigen::Vector3d behind = cam.center() + cam.rotation.row(2).transpose() * -1.0;
  CHECK_THROWS_AS(project(cam, behind), Error);
  Eigen::Vector2d uv;
  CHECK_FALSE(try_project(cam, behind, &uv));
}

TEST_CASE("triangulation inverts projection exactly at zero noise") {
  auto [cam_a, cam_b] = paper_rig();
  Draw draw(21);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d p(draw.uniform(-0.8, 0.8), draw.uniform(0.2, 1.9),
                            draw.uniform(-0.8, 0.8));
    const TriangulationResult r =
        triangulate_two_view(cam_a, cam_b, project(cam_a, p), project(cam_b, p));
    CHECK((r.point - p).norm() < 1e-6);
    CHECK(r.residual_px < 1e-6);
  }
}

TEST_CASE("identical cameras cannot triangulate") {
  auto [cam_a, cam_b] = paper_rig();
  CHECK_THROWS_WITH_AS(
      triangulate_two_view(cam_a, cam_a, {500, 300}, {510, 300}),
      doctest::Contains("coincident"), Error);
}

TEST_CASE("noisy observations give positive residuals and errors shrink with baseline") {
  const Eigen::Vector3d target(0, 1.0, 0);
  // Narrow rig: 11.5 degrees apart; wide rig: 90 degrees apart.
  const Camera narrow_a = make_look_at_camera({3.5, 1.1, -0.35}, target);
  const Camera narrow_b = make_look_at_camera({3.5, 1.1, 0.35}, target);
  const Camera wide_a = make_look_at_camera({3.5, 1.1, 0}, target);
  const Camera wide_b = make_look_at_camera({0, 1.1, 3.5}, target);

  Draw draw(22);
  double narrow_err = 0, wide_err = 0;
  int positive_residuals = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d p(draw.uniform(-0.5, 0.5), draw.uniform(0.5, 1.5),
                            draw.uniform(-0.5, 0.5));
    const Eigen::Vector2d noise_a(draw.gaussian(), draw.gaussian());
    const Eigen::Vector2d noise_b(draw.gaussian(), draw.gaussian());
    const TriangulationResult nr = triangulate_two_view(
        narrow_a, narrow_b, project(narrow_a, p) + noise_a, project(narrow_b, p) + noise_b);
    const TriangulationResult wr = triangulate_two_view(
        wide_a, wide_b, project(wide_a, p) + noise_a, project(wide_b, p) + noise_b);
    narrow_err += (nr.point - p).norm();
    wide_err += (wr.point - p).norm();
    if (wr.residual_px > 0) ++positive_residuals;
  }
  CHECK(positive_residuals > n * 99 / 100);
  CHECK(wide_err / n < narrow_err / n);
}

TEST_CASE("candidate sampling fills the request with full-frame masks") {
  auto [cam_a, cam_b] = paper_rig();
  const BinaryMask full_a = BinaryMask::full(cam_a.image_width_px, cam_a.image_height_px);
  const BinaryMask full_b = BinaryMask::full(cam_b.image_width_px, cam_b.image_height_px);
  Aabb bounds;
  bounds.lo = Eigen::Vector3d(-0.5, 0.4, -0.5);
  bounds.hi = Eigen::Vector3d(0.5, 1.6, 0.5);

  const auto points = sample_candidate_points(cam_a, cam_b, full_a, full_b, 500, bounds, 99);
  REQUIRE(points.size() == 500);
  for (const auto& p : points) {
    CHECK(p.x() >= bounds.lo.x());
    CHECK(p.x() <= bounds.hi.x());
    CHECK(p.y() >= bounds.lo.y());
    CHECK(p.y() <= bounds.hi.y());
    CHECK(full_a.contains(project(cam_a, p)));
    CHECK(full_b.contains(project(cam_b, p)));
  }
}

TEST_CASE("an empty mask exhausts the sampler") {
  auto [cam_a, cam_b] = paper_rig();
  const BinaryMask full = BinaryMask::full(cam_a.image_width_px, cam_a.image_height_px);
  const BinaryMask empty = BinaryMask::empty(cam_b.image_width_px, cam_b.image_height_px);
  Aabb bounds;
  bounds.lo = Eigen::Vector3d(-0.5, 0.4, -0.5);
  bounds.hi = Eigen::Vector3d(0.5, 1.6, 0.5);
  CHECK_THROWS_WITH_AS(sample_candidate_points(cam_a, cam_b, full, empty, 10, bounds, 1),
                       doctest::Contains("exhausted"), Error);
}

TEST_CASE("samples from bounding-box masks reproject inside the boxes") {
  auto [cam_a, cam_b] = paper_rig();
  Aabb bounds;
  bounds.lo = Eigen::Vector3d(-0.3, 0.7, -0.2);
  bounds.hi = Eigen::Vector3d(0.3, 1.4, 0.2);

  // Mask = the 2D bounding box of the projected world-box corners; for a
  // convex body this contains the body's full projection.
  auto bbox_mask = [](const Camera& cam, const Aabb& box) {
    double u0 = 1e9, v0 = 1e9, u1 = -1e9, v1 = -1e9;
    for (int i = 0; i < 8; ++i) {
      const Eigen::Vector3d corner(i & 1 ? box.hi.x() : box.lo.x(),
                                   i & 2 ? box.hi.y() : box.lo.y(),
                                   i & 4 ? box.hi.z() : box.lo.z());
      const Eigen::Vector2d uv = project(cam, corner);
      u0 = std::min(u0, uv.x());
      v0 = std::min(v0, uv.y());
      u1 = std::max(u1, uv.x());
      v1 = std::max(v1, uv.y());
    }
    BinaryMask mask = BinaryMask::empty(cam.image_width_px, cam.image_height_px);
    for (int y = std::max(0, (int)v0); y <= std::min(cam.image_height_px - 1, (int)v1); ++y)
      for (int x = std::max(0, (int)u0); x <= std::min(cam.image_width_px - 1, (int)u1); ++x)
        mask.at(x, y) = 1;
    return mask;
  };

  const BinaryMask mask_a = bbox_mask(cam_a, bounds);
  const BinaryMask mask_b = bbox_mask(cam_b, bounds);
  const auto points = sample_candidate_points(cam_a, cam_b, mask_a, mask_b, 200, bounds, 5);
  for (const auto& p : points) {
    CHECK(mask_a.contains(project(cam_a, p)));
    CHECK(mask_b.contains(project(cam_b, p)));
  }
}

TEST_CASE("candidate sampling is reproducible per seed") {
  auto [cam_a, cam_b] = paper_rig();
  const BinaryMask full_a = BinaryMask::full(cam_a.image_width_px, cam_a.image_height_px);
  const BinaryMask full_b = BinaryMask::full(cam_b.image_width_px, cam_b.image_height_px);
  Aabb bounds;
  bounds.lo = Eigen::Vector3d(-0.5, 0.4, -0.5);
  bounds.hi = Eigen::Vector3d(0.5, 1.6, 0.5);
  const auto p1 = sample_candidate_points(cam_a, cam_b, full_a, full_b, 100, bounds, 1234);
  const auto p2 = sample_candidate_points(cam_a, cam_b, full_a, full_b, 100, bounds, 1234);
  const auto p3 = sample_candidate_points(cam_a, cam_b, full_a, full_b, 100, bounds, 4321);
  REQUIRE(p1.size() == p2.size());
  for (size_t i = 0; i < p1.size(); ++i) CHECK((p1[i] - p2[i]).norm() == 0.0);
  CHECK((p1[0] - p3[0]).norm() > 0.0);
}

TEST_CASE("procrustes: identity when target equals source") {
  Draw draw(23);
  MatrixX3d src(6, 3);
  for (int i = 0; i < 6; ++i)
    src.row(i) << draw.uniform(-1, 1), draw.uniform(-1, 1), draw.uniform(-1, 1);
  const ProcrustesResult r = procrustes_align(src, src, true);
  CHECK((r.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.translation.norm() < 1e-12);
  CHECK(r.scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.rms < 1e-12);
}

TEST_CASE("procrustes recovers a constructed similarity transform") {
  Draw draw(24);
  for (int trial = 0; trial < 25; ++trial) {
    MatrixX3d src(8, 3);
    for (int i = 0; i < 8; ++i)
      src.row(i) << draw.uniform(-1, 1), draw.uniform(-1, 1), draw.uniform(-1, 1);
    const Eigen::Matrix3d rot = draw.rotation();
    const Eigen::Vector3d t(draw.uniform(-2, 2), draw.uniform(-2, 2), draw.uniform(-2, 2));
    MatrixX3d tgt = (2.0 * (rot * src.transpose())).transpose();
    tgt.rowwise() += t.transpose();

    const ProcrustesResult r = procrustes_align(src, tgt, true);
    CHECK((r.rotation - rot).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((r.translation - t).norm() < 1e-9);
    CHECK(r.scale == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(r.rms < 1e-9);
  }
}

TEST_CASE("procrustes never returns a reflection") {
  Draw draw(25);
  MatrixX3d src(7, 3);
  for (int i = 0; i < 7; ++i)
    src.row(i) << draw.uniform(-1, 1), draw.uniform(-1, 1), draw.uniform(-1, 1);
  MatrixX3d mirrored = src;
  mirrored.col(0) *= -1.0;  // a reflection of the source
  const ProcrustesResult r = procrustes_align(src, mirrored, true);
  CHECK(r.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.rms > 1e-3);
}

TEST_CASE("procrustes residual is invariant to pre-applied similarity transforms") {
  Draw draw(26);
  MatrixX3d src(9, 3), tgt(9, 3);
  for (int i = 0; i < 9; ++i) {
    src.row(i) << draw.uniform(-1, 1), draw.uniform(-1, 1), draw.uniform(-1, 1);
    tgt.row(i) << draw.uniform(-1, 1), draw.uniform(-1, 1), draw.uniform(-1, 1);
  }
  const double base = procrustes_align(src, tgt, true).rms;
  const Eigen::Matrix3d rot = draw.rotation();
  MatrixX3d moved = (0.7 * (rot * src.transpose())).transpose();
  moved.rowwise() += Eigen::RowVector3d(1.0, -2.0, 0.5);
  const double after = procrustes_align(moved, tgt, true).rms;
  CHECK(base == doctest::Approx(after).epsilon(1e-9));
}

TEST_CASE("procrustes rejects degenerate inputs") {
  MatrixX3d coincident = MatrixX3d::Zero(5, 3);
  MatrixX3d tgt = MatrixX3d::Random(5, 3);
  CHECK_THROWS_AS(procrustes_align(coincident, tgt, true), Error);
  MatrixX3d two = MatrixX3d::Random(2, 3);
  CHECK_THROWS_AS(procrustes_align(two, two, false), Error);
}

TEST_CASE("procrustes without scale pins the scale to one") {
  Draw draw(27);
  MatrixX3d src(6, 3);
  for (int i = 0; i < 6; ++i)
    src.row(i) << draw.uniform(-1, 1), draw.uniform(-1, 1), draw.uniform(-1, 1);
  MatrixX3d tgt = 3.0 * src;
  const ProcrustesResult r = procrustes_align(src, tgt, false);
  CHECK(r.scale == 1.0);
  CHECK(r.rms > 0.1);
}
