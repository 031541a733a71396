// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

namespace splathead {

// Unit quaternion in (w, x, y, z) order. Stored components are not forced to
// unit norm; conversion to a rotation normalizes internally.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }

  double norm() const;
  Quaternion normalized() const;

  Eigen::Vector4d as_vec4() const { return {w, x, y, z}; }
  static Quaternion from_vec4(const Eigen::Vector4d& v) {
    return {v[0], v[1], v[2], v[3]};
  }
};

// Rotation matrix of q. q is normalized internally; a zero-norm or non-finite
// quaternion raises InvalidInputError.
Eigen::Matrix3d quat_to_rotation(const Quaternion& q);

// Pinhole camera. Right handed, looking down +z in camera space, y down,
// x right. world->camera: p_cam = R * p_world + t.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Quaternion rotation;          // world -> camera
  Eigen::Vector3d translation;  // camera-space offset t
  int width = 0;
  int height = 0;

  Camera() : translation(Eigen::Vector3d::Zero()) {}

  Eigen::Matrix3d rotation_matrix() const { return quat_to_rotation(rotation); }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const {
    return rotation_matrix() * p_world + translation;
  }
  // Camera center in world coordinates (-R^T t).
  Eigen::Vector3d center() const {
    return -(rotation_matrix().transpose() * translation);
  }
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // camera-space z
};

// Projects a world point. Throws BehindCameraError when the camera-space
// depth is <= z_near.
PixelCoord project(const Camera& camera, const Eigen::Vector3d& p_world,
                   double z_near = 1e-4);

// Inverse of project for a given pixel position and positive depth
// (world units). Throws InvalidInputError for depth <= 0.
Eigen::Vector3d unproject(const Camera& camera, double u, double v, double depth);

// Camera orbited by yaw_deg degrees about the vertical (world y) axis through
// pivot. Distance to the pivot is preserved and the pivot projects to the
// same pixel. Composing yaws adds angles. |yaw_deg| must be <= 90.
Camera yaw_camera(const Camera& base, double yaw_deg, const Eigen::Vector3d& pivot);

}  // namespace splathead
