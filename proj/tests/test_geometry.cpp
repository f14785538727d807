#include <doctest.h>

#include <cmath>

#include "tns/geometry.hpp"

using namespace tns::geom;

namespace {

CameraIntrinsics simple_intrinsics() {
  CameraIntrinsics intr;
  intr.fx = intr.fy = 32.0;
  intr.cx = intr.cy = 32.0;
  intr.width = intr.height = 64;
  intr.validate();
  return intr;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("ray through principal point is +z") {
  auto intr = simple_intrinsics();
  Pose pose;
  Ray r = ray_for_pixel(intr, pose, intr.cx, intr.cy, 0.1, 4.0);
  CHECK(r.direction.isApprox(Vec3(0, 0, 1), 1e-12));
  CHECK(r.origin.isApprox(Vec3::Zero(), 1e-12));
  CHECK(std::abs(r.direction.norm() - 1.0) < 1e-12);
}

TEST_CASE("ray one focal length right of center") {
  auto intr = simple_intrinsics();
  intr.fx = intr.fy = 16.0;  // keep cx + fx inside the image
  Pose pose;
  Ray r = ray_for_pixel(intr, pose, intr.cx + intr.fx, intr.cy, 0.1, 4.0);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK(r.direction.isApprox(Vec3(inv_sqrt2, 0, inv_sqrt2), 1e-12));
}

TEST_CASE("project a point on the optical axis") {
  auto intr = simple_intrinsics();
  Pose pose;
  auto p = project(intr, pose, Vec3(0, 0, 2));
  REQUIRE(p.has_value());
  CHECK(p->px == doctest::Approx(intr.cx).epsilon(1e-12));
  CHECK(p->py == doctest::Approx(intr.cy).epsilon(1e-12));
  CHECK(p->depth == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("points behind the camera do not project") {
  auto intr = simple_intrinsics();
  Pose pose;
  CHECK(!project(intr, pose, Vec3(0, 0, -1)).has_value());
  CHECK(!project(intr, pose, Vec3(0.3, 0.1, 0.0)).has_value());
}

TEST_CASE("project then ray round trip") {
  auto intr = simple_intrinsics();
  Pose pose;
  pose.rotation = Eigen::AngleAxisd(0.4, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  pose.translation = Vec3(0.2, -0.1, 0.3);
  pose.validate();
  const Vec3 point = pose.translation + pose.rotation * Vec3(0.1, -0.2, 1.7);
  auto proj = project(intr, pose, point);
  REQUIRE(proj.has_value());
  Ray r = ray_for_pixel(intr, pose, proj->px, proj->py, 0.01, 10.0);
  const double t = (point - r.origin).norm();
  CHECK((r.at(t) - point).norm() < 1e-6);
}

TEST_CASE("ray evaluation is linear in t") {
  Ray r;
  r.origin = Vec3(1, 2, 3);
  r.direction = Vec3(0, 1, 0);
  CHECK(r.at(0.0).isApprox(r.origin, 1e-15));
  CHECK(r.at(2.5).isApprox(Vec3(1, 4.5, 3), 1e-15));
  const Vec3 mid = 0.5 * (r.at(1.0) + r.at(3.0));
  CHECK(mid.isApprox(r.at(2.0), 1e-12));
}

TEST_CASE("out-of-bounds pixels and bad bounds throw") {
  auto intr = simple_intrinsics();
  Pose pose;
  CHECK_THROWS_AS(ray_for_pixel(intr, pose, -1.0, 5.0, 0.1, 4.0), std::invalid_argument);
  CHECK_THROWS_AS(ray_for_pixel(intr, pose, 5.0, 64.0, 0.1, 4.0), std::invalid_argument);
  CHECK_THROWS_AS(ray_for_pixel(intr, pose, 5.0, 5.0, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("intrinsics and pose validation") {
  CameraIntrinsics bad = simple_intrinsics();
  bad.fx = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  Pose skew;
  skew.rotation(0, 1) = 0.5;
  CHECK_THROWS_AS(skew.validate(), std::invalid_argument);
}

}  // TEST_SUITE
