// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "splathead/image.hpp"

namespace splathead {

struct LossConfig {
  double lambda_p = 0.01;    // edge (gradient L1) term weight
  double lambda_ssim = 0.2;  // structural term weight
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double lr = 1.0;           // initial SGD step size
  double lr_decay = 1.0;     // multiplicative per-step decay
  int steps = 500;
  std::uint64_t seed = 0;
};

// Mean absolute difference over all pixels and channels. When grad_a is
// non-null it receives dL/da (overwritten; sign(0) taken as 0).
double l1_loss(const GeomImage& a, const GeomImage& b, GeomImage* grad_a = nullptr);

// Mean SSIM over pixels and channels with a Gaussian window (truncated and
// renormalized at the borders, so any window/image size combination is
// defined). Constants C1 = 0.01^2, C2 = 0.03^2 assume values in [0, 1].
// grad_a receives d(mean ssim)/da when requested.
double ssim(const GeomImage& a, const GeomImage& b, int window = 11,
            double sigma = 1.5, GeomImage* grad_a = nullptr);

// L1 between forward-difference gradient fields of the two images: a cheap
// structural/perceptual surrogate. Invariant to a shared constant offset.
double edge_loss(const GeomImage& a, const GeomImage& b, GeomImage* grad_a = nullptr);

struct TotalLossBreakdown {
  double total = 0.0;
  double l1_coarse = 0.0;
  double l1_target = 0.0;
  double edge_coarse = 0.0;
  double edge_target = 0.0;
  double ssim_term = 0.0;  // 1 - ssim(target, gt)
};

// total = L1(coarse, gt) + L1(target, gt)
//       + lambda_p * (edge(coarse, gt) + edge(target, gt))
//       + lambda_ssim * (1 - ssim(target, gt)).
// coarse is the pre-densification render, target the densified one. Optional
// outputs receive dtotal/dcoarse and dtotal/dtarget.
TotalLossBreakdown total_loss(const GeomImage& coarse, const GeomImage& target,
                              const GeomImage& gt, const LossConfig& cfg = {},
                              GeomImage* grad_coarse = nullptr,
                              GeomImage* grad_target = nullptr);

// 10 * log10(1 / MSE) for unit-range images; +infinity when identical.
double psnr(const GeomImage& a, const GeomImage& b);

}  // namespace splathead
