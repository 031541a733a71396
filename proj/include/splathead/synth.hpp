// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "splathead/camera.hpp"
#include "splathead/image.hpp"

namespace splathead {

struct SynthBump {
  Eigen::Vector3d center;
  double radius = 0.0;
};

// Procedural head: an ellipsoid smooth-unioned with bump spheres (ears,
// nose), shaded with a fixed x = 0 plane light over banded albedo so that
// renders of an x-mirrored config are exact pixel mirrors. The head sits at
// the origin of the canonical frame (sagittal plane x = 0, y down, camera
// side at -z).
struct SynthConfig {
  Eigen::Vector3d radii{0.85, 1.05, 0.9};
  std::vector<SynthBump> bumps;
  // Amplitude (sphere radius) of a one-sided cheek bump breaking mirror
  // symmetry; 0 keeps the scene exactly symmetric for symmetric bump lists.
  double asymmetry = 0.0;
  Eigen::Vector3d asymmetry_center{0.45, -0.3, -0.6};
  double smooth_k = -1.0;  // blend width; < 0 resolves to 0.05 * min radius
  int image_size = 128;
  double camera_distance = 3.2;
  std::uint64_t seed = 0;

  // Ellipsoid plus two ears and a nose.
  static SynthConfig default_head();
};

// The same scene with every x coordinate flipped (bumps and the asymmetry
// site).
SynthConfig mirror_config(const SynthConfig& cfg);

// Signed distance of the configured head at a world point.
double synth_sdf(const SynthConfig& cfg, const Eigen::Vector3d& p);

// Frontal camera on the -z axis looking at the head, principal point at the
// exact image center.
Camera synth_camera(const SynthConfig& cfg);

struct SynthView {
  GeomImage color;   // shaded albedo, black background
  GeomImage depth;   // camera-space z, 0 outside the mask
  GeomImage normal;  // camera-frame unit normals (n_z < 0 faces the camera)
  GeomImage mask;    // hit indicator
};

// Sphere-traced render of the head through the given camera. Deterministic;
// no sampling.
SynthView synth_scene(const SynthConfig& cfg, const Camera& camera);

struct ProfilePair {
  Camera camera_pos, camera_neg;
  SynthView view_pos, view_neg;
};

// Views from +yaw_deg and -yaw_deg orbits of the frontal camera about the
// head center.
ProfilePair synth_profile_pair(const SynthConfig& cfg, double yaw_deg);

}  // namespace splathead
