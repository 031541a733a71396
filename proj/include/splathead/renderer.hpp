// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "splathead/camera.hpp"
#include "splathead/gaussians.hpp"
#include "splathead/image.hpp"

namespace splathead {

struct RenderConfig {
  int tile_size = 16;
  double alpha_ceil = 0.999;          // per-splat alpha cap
  double alpha_floor = 1.0 / 255.0;   // contributions below this are skipped
  double z_near = 1e-4;
  double blur_floor = 0.3;            // px^2 added to the projected covariance
};

// A Gaussian projected to the image plane. inv_* are the entries of the
// inverse 2D covariance [[inv_a, inv_b], [inv_b, inv_c]]. maha_cutoff is the
// squared Mahalanobis distance beyond which the splat's alpha would fall
// below alpha_floor; radius is a conservative pixel radius containing that
// region.
struct Splat2D {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
  double inv_a = 0.0, inv_b = 0.0, inv_c = 0.0;
  double depth = 0.0;
  Eigen::Vector3d color;
  double alpha_base = 0.0;  // activated opacity
  double maha_cutoff = 0.0;
  double radius = 0.0;
  std::int32_t source_index = -1;
};

// EWA projection of one Gaussian: cov2d = J W Sigma W^T J^T + blur_floor * I
// with W the world->camera rotation and J the perspective Jacobian at the
// mean. Color is evaluated along the camera-center -> mean direction.
// Returns nullopt when the Gaussian is culled: depth <= z_near, the 3-sigma
// ellipse misses the viewport, or its opacity can never reach alpha_floor.
std::optional<Splat2D> project_gaussian(const GaussianCloud& cloud, std::size_t index,
                                        const Camera& camera,
                                        const RenderConfig& cfg = {});

struct RenderOutput {
  GeomImage color;          // premultiplied over a transparent black background
  GeomImage alpha;          // 1 - final transmittance
  GeomImage transmittance;  // final per-pixel transmittance
};

// Tile-binned forward splatting. Splats composite front to back in depth
// order (ties by source index): alpha = min(alpha_ceil, alpha_base *
// exp(-0.5 * d^T cov2d^-1 d)), C += alpha * T * color, T *= 1 - alpha.
// Deterministic for any worker count; an empty cloud renders transparent
// black.
RenderOutput render(const GaussianCloud& cloud, const Camera& camera,
                    const RenderConfig& cfg = {});

// Reference compositor: every pixel walks the full sorted splat list with no
// tile binning and no transmittance early-out. Same contribution rule as
// render; used as the correctness oracle.
RenderOutput render_reference(const GaussianCloud& cloud, const Camera& camera,
                              const RenderConfig& cfg = {});

struct RenderGradients {
  // dL/d(color coefficients) and dL/d(opacity logit) per input Gaussian.
  std::vector<std::array<double, 12>> color_coeffs;
  std::vector<double> opacity_logits;
};

// Analytic gradients of sum(upstream * rendered_color) with respect to the
// color coefficients and opacity logits, replaying the forward compositing
// exactly. Saturated values (clamped color channels, alpha at the ceiling,
// skipped contributions) get zero gradient. upstream must be a 3-channel
// raster of the camera's size. Accumulation runs per tile and merges in a
// fixed tile order, so results are bit-stable for any worker count.
RenderGradients render_grad_color_opacity(const GaussianCloud& cloud,
                                          const Camera& camera,
                                          const GeomImage& upstream,
                                          const RenderConfig& cfg = {});

}  // namespace splathead
