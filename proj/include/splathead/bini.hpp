// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "splathead/camera.hpp"
#include "splathead/cloud.hpp"
#include "splathead/image.hpp"

namespace splathead {

struct BiniConfig {
  double k = 2.0;            // bilateral weight sharpness
  double data_weight = 0.01; // soft anchor strength (lambda_d)
  int irls_iters = 20;
  double cg_tol = 1e-8;      // relative residual for the inner solve
  int cg_max_iters = 2000;
  bool bilateral = true;     // false freezes all weights at 1/2 (uniform)
};

struct BiniResult {
  GeomImage depth;
  // Self-consistent objective after each accepted iterate, starting with the
  // initialization. Non-increasing by construction.
  std::vector<double> objective_trace;
  bool normals_flipped = false;  // inputs had majority n_z > 0 and were flipped
};

// Discontinuity-preserving integration of a camera-space normal map into a
// depth map over the masked region. Per masked pixel the target gradients
// are p = -n_x / n_z, q = -n_y / n_z (|n_z| clamped to >= 1e-3, sign kept);
// one-sided forward/backward difference residuals are weighted by
// w+ = sigmoid(k * ((r-)^2 - (r+)^2)), w- = 1 - w+, so the smoother side of
// an edge dominates. Terms referencing out-of-mask neighbors are dropped;
// a lone one-sided term gets weight 1/2. A soft anchor
// data_weight * (z - depth)^2 pins the solution to the input depth. Solved
// by iteratively reweighted least squares, each inner step a conjugate
// gradient solve of the weighted normal equations warm-started at the
// current iterate. An iterate that would raise the self-consistent objective
// is rejected and iteration stops, so the recorded trace never increases.
//
// Throws InvalidInputError for malformed inputs and NumericalError (carrying
// the final residual) when CG fails to converge within cg_max_iters.
BiniResult integrate_normals(const GeomImage& depth, const GeomImage& normal,
                             const GeomImage& mask, const BiniConfig& cfg = {});

// Rescales a camera-space normal map so that p = -n_x/n_z reads as depth
// units per pixel step: one pixel spans about z_med / fx world units at the
// median masked depth, so n_x and n_y are multiplied by that footprint and
// each masked normal renormalized. Apply before integrate_normals whenever
// the normal map comes from a perspective camera; the integrator itself
// treats pixels as unit steps.
GeomImage normals_to_pixel_slopes(const GeomImage& normal, const GeomImage& depth,
                                  const GeomImage& mask, const Camera& camera);

// Lifts masked pixels to world space through the camera at pixel centers
// (u + 0.5, v + 0.5). Depth values on the mask must be positive.
GridPointCloud backproject_grid(const GeomImage& depth, const GeomImage& mask,
                                const Camera& camera);

// integrate_normals followed by backproject_grid of the refined depth.
GridPointCloud reconstruct(const GeomImage& depth, const GeomImage& normal,
                           const GeomImage& mask, const Camera& camera,
                           const BiniConfig& cfg = {});

}  // namespace splathead
