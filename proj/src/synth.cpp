// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/synth.hpp"

#include <algorithm>
#include <cmath>

#include "splathead/errors.hpp"

namespace splathead {

namespace {

constexpr int kMaxSteps = 256;
constexpr double kHitEps = 1e-5;
constexpr double kStepScale = 0.9;  // safety margin on sphere-trace steps
constexpr double kFarPlane = 100.0;
constexpr double kNormalH = 1e-4;  // central-difference half step

// Distance bound for an ellipsoid (exact for equal radii, a conservative
// underestimate otherwise).
double ellipsoid_sdf(const Eigen::Vector3d& p, const Eigen::Vector3d& r) {
  const double k0 = (p.array() / r.array()).matrix().norm();
  const double k1 = (p.array() / (r.array() * r.array())).matrix().norm();
  if (k1 == 0.0) return -r.minCoeff();  // center
  return k0 * (k0 - 1.0) / k1;
}

double smooth_union(double a, double b, double k) {
  const double h = std::clamp(0.5 + 0.5 * (b - a) / k, 0.0, 1.0);
  return b * (1.0 - h) + a * h - k * h * (1.0 - h);
}

double resolve_smooth_k(const SynthConfig& cfg) {
  return cfg.smooth_k > 0.0 ? cfg.smooth_k : 0.05 * cfg.radii.minCoeff();
}

Eigen::Vector3d albedo(const Eigen::Vector3d& p) {
  // Three horizontal tone bands (y is down: negative y is the forehead).
  if (p.y() < -0.3) return {0.85, 0.70, 0.60};
  if (p.y() < 0.25) return {0.70, 0.50, 0.45};
  return {0.50, 0.35, 0.30};
}

Eigen::Vector3d sdf_gradient(const SynthConfig& cfg, const Eigen::Vector3d& p) {
  Eigen::Vector3d g;
  for (int i = 0; i < 3; ++i) {
    Eigen::Vector3d hi = p, lo = p;
    hi[i] += kNormalH;
    lo[i] -= kNormalH;
    g[i] = (synth_sdf(cfg, hi) - synth_sdf(cfg, lo)) / (2.0 * kNormalH);
  }
  return g;
}

}  // namespace

SynthConfig SynthConfig::default_head() {
  SynthConfig cfg;
  cfg.bumps = {
      {{0.82, 0.0, 0.1}, 0.28},    // right ear
      {{-0.82, 0.0, 0.1}, 0.28},   // left ear
      {{0.0, 0.12, -0.82}, 0.22},  // nose, toward the camera side
  };
  return cfg;
}

SynthConfig mirror_config(const SynthConfig& cfg) {
  SynthConfig out = cfg;
  for (SynthBump& b : out.bumps) b.center.x() = -b.center.x();
  out.asymmetry_center.x() = -out.asymmetry_center.x();
  return out;
}

double synth_sdf(const SynthConfig& cfg, const Eigen::Vector3d& p) {
  const double k = resolve_smooth_k(cfg);
  double d = ellipsoid_sdf(p, cfg.radii);
  for (const SynthBump& b : cfg.bumps) {
    d = smooth_union(d, (p - b.center).norm() - b.radius, k);
  }
  if (cfg.asymmetry > 0.0) {
    d = smooth_union(d, (p - cfg.asymmetry_center).norm() - cfg.asymmetry, k);
  }
  return d;
}

Camera synth_camera(const SynthConfig& cfg) {
  if (cfg.image_size < 2) {
    throw InvalidInputError("synth_camera: image_size must be at least 2");
  }
  Camera cam;
  cam.width = cfg.image_size;
  cam.height = cfg.image_size;
  cam.fx = cam.fy = 1.1 * cfg.image_size;
  cam.cx = cfg.image_size / 2.0;
  cam.cy = cfg.image_size / 2.0;
  cam.rotation = Quaternion::identity();
  // Camera center at (0, 0, -distance); p_cam = p + (0, 0, distance).
  cam.translation = Eigen::Vector3d(0.0, 0.0, cfg.camera_distance);
  return cam;
}

SynthView synth_scene(const SynthConfig& cfg, const Camera& camera) {
  if (!(cfg.radii.minCoeff() > 0.0)) {
    throw InvalidInputError("synth_scene: head radii must be positive");
  }
  for (const SynthBump& b : cfg.bumps) {
    if (!(b.radius > 0.0) || b.radius >= cfg.radii.minCoeff()) {
      throw InvalidInputError(
          "synth_scene: bump radii must be positive and smaller than the head");
    }
  }
  if (synth_sdf(cfg, camera.center()) <= 0.0) {
    throw InvalidInputError("synth_scene: camera is inside the head");
  }
  const int w = camera.width, h = camera.height;
  SynthView view{GeomImage(w, h, 3, ImageKind::Color),
                 GeomImage(w, h, 1, ImageKind::Depth),
                 GeomImage(w, h, 3, ImageKind::Normal),
                 GeomImage(w, h, 1, ImageKind::Mask)};

  const Eigen::Matrix3d rot = camera.rotation_matrix();
  const Eigen::Matrix3d rot_t = rot.transpose();
  const Eigen::Vector3d origin = camera.center();
  // Fixed light in the x = 0 plane, pointing into the scene.
  const Eigen::Vector3d light = Eigen::Vector3d(0.0, 0.35, 0.9).normalized();

  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const Eigen::Vector3d dir_cam((px + 0.5 - camera.cx) / camera.fx,
                                    (py + 0.5 - camera.cy) / camera.fy, 1.0);
      const Eigen::Vector3d dir = (rot_t * dir_cam).normalized();

      double t = 0.0;
      bool hit = false;
      for (int step = 0; step < kMaxSteps; ++step) {
        const double d = synth_sdf(cfg, origin + t * dir);
        if (d < kHitEps) {
          hit = true;
          break;
        }
        t += d * kStepScale;
        if (t > kFarPlane) break;
      }
      if (!hit) continue;

      const Eigen::Vector3d p = origin + t * dir;
      const Eigen::Vector3d n_world = sdf_gradient(cfg, p).normalized();
      const Eigen::Vector3d n_cam = rot * n_world;
      const double depth = (rot * p + camera.translation).z();

      const double shade = 0.25 + 0.75 * std::max(0.0, -n_world.dot(light));
      const Eigen::Vector3d rgb = albedo(p) * shade;

      view.mask.at(px, py) = 1.0;
      view.depth.at(px, py) = depth;
      for (int c = 0; c < 3; ++c) {
        view.normal.at(px, py, c) = n_cam[c];
        view.color.at(px, py, c) = std::clamp(rgb[c], 0.0, 1.0);
      }
    }
  }
  return view;
}

ProfilePair synth_profile_pair(const SynthConfig& cfg, double yaw_deg) {
  const Camera base = synth_camera(cfg);
  ProfilePair pair;
  pair.camera_pos = yaw_camera(base, yaw_deg, Eigen::Vector3d::Zero());
  pair.camera_neg = yaw_camera(base, -yaw_deg, Eigen::Vector3d::Zero());
  pair.view_pos = synth_scene(cfg, pair.camera_pos);
  pair.view_neg = synth_scene(cfg, pair.camera_neg);
  return pair;
}

}  // namespace splathead
