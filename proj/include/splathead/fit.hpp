// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "splathead/camera.hpp"
#include "splathead/decoders.hpp"
#include "splathead/gaussians.hpp"
#include "splathead/image.hpp"
#include "splathead/losses.hpp"
#include "splathead/renderer.hpp"

namespace splathead {

struct FitTarget {
  Camera camera;
  GeomImage image;  // ground-truth color
};

struct FitTraceRow {
  int step = 0;
  double total = 0.0;
  double l1_coarse = 0.0;
  double l1_target = 0.0;
  double edge = 0.0;       // edge_coarse + edge_target
  double ssim_term = 0.0;  // 1 - ssim(target, gt)
};

struct FitResult {
  std::vector<FitTraceRow> trace;  // loss components summed over target views
  double initial_psnr = 0.0;       // mean over views, densified render
  double final_psnr = 0.0;
};

// Plain SGD on the cloud's color coefficients and opacity logits. Every step
// renders the cloud (coarse) and its densified version (target) against each
// view; densified children share their parent's color/opacity, so child
// gradients fold back onto the parent. Throws NumericalError (naming the
// step) if the loss goes non-finite.
FitResult fit_cloud(GaussianCloud& cloud, const std::vector<FitTarget>& targets,
                    const LossConfig& loss_cfg = {},
                    const RenderConfig& render_cfg = {});

struct PipelineInputs {
  GridPointCloud points;           // deformed visible points
  GridPointCloud mirrored_points;  // deformed mirrored points
  GeomImage features;
};

// Same objective driven through the decoders: each step re-decodes both
// clouds, renders, and backpropagates the color/opacity gradients into the
// visible decoder and the symmetric color/opacity offset nets (geometry
// heads receive no image gradient and stay fixed).
FitResult fit_pipeline(const PipelineInputs& inputs, RegressorBundle& bundle,
                       const std::vector<FitTarget>& targets,
                       const LossConfig& loss_cfg = {},
                       const RenderConfig& render_cfg = {});

// CSV with header step,total,l1_coarse,l1_target,edge,ssim_term.
void write_trace_csv(const std::string& path, const std::vector<FitTraceRow>& trace);

}  // namespace splathead
