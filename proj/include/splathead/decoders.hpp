// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "splathead/cloud.hpp"
#include "splathead/gaussians.hpp"
#include "splathead/image.hpp"
#include "splathead/mlp.hpp"

namespace splathead {

// Width of the fixed per-pixel descriptor produced by identity_features.
inline constexpr int kFeatureDim = 8;

// Hand-built local appearance descriptor standing in for a learned image
// encoder: [r, g, b, grad_x, grad_y, grad_mag, u_norm, v_norm] per pixel.
// Gradients are central differences of the mean channel (one-sided at the
// border); u_norm/v_norm are pixel centers normalized to [0, 1].
GeomImage identity_features(const GeomImage& color);

// The full set of per-point regressors. All decoders are residual: a
// zero-parameter net leaves geometry untouched and copies anchor parameters.
struct RegressorBundle {
  int feature_dim = kFeatureDim;
  int expression_dim = 64;
  Mlp refine;       // [pos(3); feature(F)] -> position delta(3)
  Mlp deform;       // [pos(3); beta_d(D); beta_s(D)] -> position delta(3)
  Mlp decode;       // [pos(3); feature(F)] -> 20 raw Gaussian parameters
  Mlp sym_scale;    // [pos(3); feature(F); log_scale(3)] -> delta(3)
  Mlp sym_rot;      // [pos(3); feature(F); quat(4)] -> delta(4)
  Mlp sym_color;    // [pos(3); feature(F); color(12)] -> delta(12)
  Mlp sym_opacity;  // [pos(3); feature(F); logit(1)] -> delta(1)

  static RegressorBundle create(int feature_dim, int expression_dim, int hidden,
                                std::uint64_t seed);
  static RegressorBundle zeros(int feature_dim, int expression_dim, int hidden);
};

// Per-point position correction: out = pos + refine([pos; feature]).
// Invalid cells pass through unchanged.
GridPointCloud refine_geometry(const GridPointCloud& cloud, const GeomImage& features,
                               const Mlp& refine);

// Expression-conditioned displacement: out = pos + net([pos; beta_d; beta_s]).
GridPointCloud deform_cloud(const GridPointCloud& cloud, const ExpressionCoeffs& beta_d,
                            const ExpressionCoeffs& beta_s, const Mlp& deform);

struct DecodeTraces {
  std::vector<Mlp::Trace> per_point;  // one per emitted Gaussian, input order
};

// Lifts each valid cell to a Gaussian. Positions are the input points
// verbatim; the 20 net outputs split into (log_scale 3, quaternion 4,
// opacity_logit 1, color 12). The quaternion gets a +1 bias on w before
// normalization so the zero net decodes to the identity rotation.
GaussianCloud decode_visible(const GridPointCloud& points, const GeomImage& features,
                             const Mlp& decode, DecodeTraces* traces = nullptr);

struct SymDecodeTraces {
  std::vector<Mlp::Trace> scale, rot, color, opacity;
  std::vector<std::int32_t> anchor_rows;  // row in the visible cloud per output
};

struct SymDecodeResult {
  GaussianCloud cloud;
  std::size_t skipped_missing_anchor = 0;  // mirrored cells without a visible source
};

// Decodes the mirrored cloud as residuals over mirror-corresponding visible
// Gaussians: each valid mirrored cell looks up the visible Gaussian decoded
// from the same grid index (mirroring preserves cell indices) and offsets its
// parameters with the sym_* nets. Features are sampled at the source cell.
// Positions are the mirrored points verbatim. Quaternions are stored as raw
// anchor + delta (no renormalization) so a zero net reproduces the anchor
// parameters exactly.
SymDecodeResult decode_symmetric(const GaussianCloud& visible, const GeomImage& features,
                                 const GridPointCloud& mirrored,
                                 const RegressorBundle& nets,
                                 SymDecodeTraces* traces = nullptr);

}  // namespace splathead
