// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/camera.hpp"

#include <cmath>
#include <numbers>

#include "splathead/errors.hpp"

namespace splathead {

double Quaternion::norm() const {
  return std::sqrt(w * w + x * x + y * y + z * z);
}

Quaternion Quaternion::normalized() const {
  const double n = norm();
  if (!(n > 1e-12) || !std::isfinite(n)) {
    throw InvalidInputError("Quaternion: cannot normalize zero or non-finite quaternion");
  }
  return {w / n, x / n, y / n, z / n};
}

Eigen::Matrix3d quat_to_rotation(const Quaternion& q_in) {
  const Quaternion q = q_in.normalized();
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Eigen::Matrix3d r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
       2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
       2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

PixelCoord project(const Camera& camera, const Eigen::Vector3d& p_world, double z_near) {
  const Eigen::Vector3d p = camera.to_camera(p_world);
  if (!(p.z() > z_near)) {
    throw BehindCameraError("project: point at or behind the near plane");
  }
  PixelCoord out;
  out.u = camera.fx * p.x() / p.z() + camera.cx;
  out.v = camera.fy * p.y() / p.z() + camera.cy;
  out.depth = p.z();
  return out;
}

Eigen::Vector3d unproject(const Camera& camera, double u, double v, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw InvalidInputError("unproject: depth must be positive and finite");
  }
  const Eigen::Vector3d p_cam((u - camera.cx) * depth / camera.fx,
                              (v - camera.cy) * depth / camera.fy, depth);
  return camera.rotation_matrix().transpose() * (p_cam - camera.translation);
}

Camera yaw_camera(const Camera& base, double yaw_deg, const Eigen::Vector3d& pivot) {
  if (!(std::abs(yaw_deg) <= 90.0)) {
    throw InvalidInputError("yaw_camera: |yaw| must be <= 90 degrees");
  }
  const double a = yaw_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  // Rotation about the world y axis (y is down, so this is a head turn).
  Eigen::Matrix3d orbit;
  orbit << c, 0.0, s,
           0.0, 1.0, 0.0,
           -s, 0.0, c;

  const Eigen::Matrix3d r = base.rotation_matrix();
  const Eigen::Vector3d center = base.center();
  const Eigen::Vector3d new_center = pivot + orbit * (center - pivot);
  const Eigen::Matrix3d new_r = r * orbit.transpose();

  // Back to quaternion form (Shepperd's method, picking the largest pivot).
  Quaternion q;
  const double trace = new_r.trace();
  if (trace > 0.0) {
    double t = std::sqrt(trace + 1.0) * 2.0;
    q.w = 0.25 * t;
    q.x = (new_r(2, 1) - new_r(1, 2)) / t;
    q.y = (new_r(0, 2) - new_r(2, 0)) / t;
    q.z = (new_r(1, 0) - new_r(0, 1)) / t;
  } else if (new_r(0, 0) > new_r(1, 1) && new_r(0, 0) > new_r(2, 2)) {
    double t = std::sqrt(1.0 + new_r(0, 0) - new_r(1, 1) - new_r(2, 2)) * 2.0;
    q.w = (new_r(2, 1) - new_r(1, 2)) / t;
    q.x = 0.25 * t;
    q.y = (new_r(0, 1) + new_r(1, 0)) / t;
    q.z = (new_r(0, 2) + new_r(2, 0)) / t;
  } else if (new_r(1, 1) > new_r(2, 2)) {
    double t = std::sqrt(1.0 + new_r(1, 1) - new_r(0, 0) - new_r(2, 2)) * 2.0;
    q.w = (new_r(0, 2) - new_r(2, 0)) / t;
    q.x = (new_r(0, 1) + new_r(1, 0)) / t;
    q.y = 0.25 * t;
    q.z = (new_r(1, 2) + new_r(2, 1)) / t;
  } else {
    double t = std::sqrt(1.0 + new_r(2, 2) - new_r(0, 0) - new_r(1, 1)) * 2.0;
    q.w = (new_r(1, 0) - new_r(0, 1)) / t;
    q.x = (new_r(0, 2) + new_r(2, 0)) / t;
    q.y = (new_r(1, 2) + new_r(2, 1)) / t;
    q.z = 0.25 * t;
  }

  Camera out = base;
  out.rotation = q.normalized();
  out.translation = -(out.rotation_matrix() * new_center);
  return out;
}

}  // namespace splathead
