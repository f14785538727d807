#pragma once

// Pinhole camera model and pixel <-> ray plumbing. Convention: right-handed,
// +z forward, image y down, pixel centers at integer + 0.5. Poses are
// camera-to-world.

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>

namespace tns::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("intrinsics: focal lengths must be > 0");
    if (!(cx > 0 && cx < width && cy > 0 && cy < height))
      throw std::invalid_argument("intrinsics: principal point outside image");
  }
};

struct Pose {
  Mat3 rotation = Mat3::Identity();   // camera-to-world
  Vec3 translation = Vec3::Zero();    // camera center in world

  void validate(double tol = 1e-6) const {
    if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > tol ||
        std::abs(rotation.determinant() - 1.0) > tol)
      throw std::invalid_argument("pose: rotation is not a proper orthonormal matrix");
  }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit length
  double t_near = 0, t_far = 1;

  Vec3 at(double t) const { return origin + t * direction; }
};

inline Ray ray_for_pixel(const CameraIntrinsics& intr, const Pose& pose, double px, double py,
                         double t_near, double t_far) {
  if (!(px >= 0 && px < intr.width && py >= 0 && py < intr.height))
    throw std::invalid_argument("ray_for_pixel: pixel outside image");
  if (!(t_near >= 0 && t_near < t_far))
    throw std::invalid_argument("ray_for_pixel: bad sampling bounds");
  Vec3 cam_dir((px - intr.cx) / intr.fx, (py - intr.cy) / intr.fy, 1.0);
  Ray r;
  r.origin = pose.translation;
  r.direction = (pose.rotation * cam_dir).normalized();
  r.t_near = t_near;
  r.t_far = t_far;
  return r;
}

struct Projection {
  double px, py;
  double depth;  // camera-frame z, positive
};

inline std::optional<Projection> project(const CameraIntrinsics& intr, const Pose& pose,
                                         const Vec3& point) {
  Vec3 cam = pose.rotation.transpose() * (point - pose.translation);
  if (cam.z() <= 0) return std::nullopt;
  const double px = intr.fx * cam.x() / cam.z() + intr.cx;
  const double py = intr.fy * cam.y() / cam.z() + intr.cy;
  if (!(px >= 0 && px < intr.width && py >= 0 && py < intr.height)) return std::nullopt;
  return Projection{px, py, cam.z()};
}

}  // namespace tns::geom
