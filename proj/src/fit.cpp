// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/fit.hpp"

#include <cmath>
#include <fstream>

#include "splathead/errors.hpp"

namespace splathead {

namespace {

struct ParamGrads {
  std::vector<std::array<double, 12>> color;
  std::vector<double> opacity;

  explicit ParamGrads(std::size_t n)
      : color(n, std::array<double, 12>{}), opacity(n, 0.0) {}

  void add(const RenderGradients& g, std::size_t row, std::size_t from) {
    for (int i = 0; i < 12; ++i) color[row][i] += g.color_coeffs[from][i];
    opacity[row] += g.opacity_logits[from];
  }
};

double mean_psnr(const GaussianCloud& cloud, const std::vector<FitTarget>& targets,
                 const RenderConfig& render_cfg) {
  double sum = 0.0;
  for (const FitTarget& t : targets) {
    sum += psnr(render(densify(cloud), t.camera, render_cfg).color, t.image);
  }
  return sum / static_cast<double>(targets.size());
}

void check_targets(const std::vector<FitTarget>& targets) {
  if (targets.empty()) {
    throw InvalidInputError("fit: need at least one target view");
  }
  for (const FitTarget& t : targets) {
    if (t.image.channels() != 3 || t.image.width() != t.camera.width ||
        t.image.height() != t.camera.height) {
      throw InvalidInputError("fit: target image does not match its camera");
    }
  }
}

// Renders both stages against every view, accumulates the loss breakdown and
// per-Gaussian color/opacity gradients of the pre-densification cloud
// (children folded onto parents). Returns the summed breakdown row.
FitTraceRow evaluate_with_grads(const GaussianCloud& cloud,
                                const std::vector<FitTarget>& targets,
                                const LossConfig& loss_cfg,
                                const RenderConfig& render_cfg, int step,
                                ParamGrads& grads) {
  const std::size_t n = cloud.size();
  const GaussianCloud dense = densify(cloud);
  FitTraceRow row;
  row.step = step;
  for (const FitTarget& t : targets) {
    const RenderOutput coarse = render(cloud, t.camera, render_cfg);
    const RenderOutput target = render(dense, t.camera, render_cfg);
    GeomImage grad_coarse, grad_target;
    const TotalLossBreakdown bl = total_loss(coarse.color, target.color, t.image,
                                             loss_cfg, &grad_coarse, &grad_target);
    row.total += bl.total;
    row.l1_coarse += bl.l1_coarse;
    row.l1_target += bl.l1_target;
    row.edge += bl.edge_coarse + bl.edge_target;
    row.ssim_term += bl.ssim_term;

    const RenderGradients gc = render_grad_color_opacity(cloud, t.camera, grad_coarse,
                                                         render_cfg);
    const RenderGradients gt = render_grad_color_opacity(dense, t.camera, grad_target,
                                                         render_cfg);
    for (std::size_t i = 0; i < n; ++i) {
      grads.add(gc, i, i);
      grads.add(gt, i, i);      // parent row in the densified cloud
      grads.add(gt, i, n + i);  // child copies the parent's color/opacity
    }
  }
  if (!std::isfinite(row.total)) {
    throw NumericalError("fit: non-finite loss at step " + std::to_string(step));
  }
  return row;
}

}  // namespace

FitResult fit_cloud(GaussianCloud& cloud, const std::vector<FitTarget>& targets,
                    const LossConfig& loss_cfg, const RenderConfig& render_cfg) {
  check_targets(targets);
  cloud.validate();
  if (cloud.size() == 0) {
    throw InvalidInputError("fit_cloud: empty cloud");
  }

  FitResult result;
  result.initial_psnr = mean_psnr(cloud, targets, render_cfg);

  double lr = loss_cfg.lr;
  for (int step = 0; step < loss_cfg.steps; ++step) {
    ParamGrads grads(cloud.size());
    result.trace.push_back(
        evaluate_with_grads(cloud, targets, loss_cfg, render_cfg, step, grads));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (int k = 0; k < 12; ++k) cloud.color_coeffs[i][k] -= lr * grads.color[i][k];
      cloud.opacity_logits[i] -= lr * grads.opacity[i];
    }
    lr *= loss_cfg.lr_decay;
  }

  result.final_psnr = mean_psnr(cloud, targets, render_cfg);
  return result;
}

FitResult fit_pipeline(const PipelineInputs& inputs, RegressorBundle& bundle,
                       const std::vector<FitTarget>& targets,
                       const LossConfig& loss_cfg, const RenderConfig& render_cfg) {
  check_targets(targets);

  const auto decode_all = [&](DecodeTraces* dt, SymDecodeTraces* st,
                              SymDecodeResult* sym_out) {
    GaussianCloud visible =
        decode_visible(inputs.points, inputs.features, bundle.decode, dt);
    SymDecodeResult sym =
        decode_symmetric(visible, inputs.features, inputs.mirrored_points, bundle, st);
    GaussianCloud joined = concat(visible, sym.cloud);
    if (sym_out) *sym_out = std::move(sym);
    return joined;
  };

  FitResult result;
  result.initial_psnr = mean_psnr(decode_all(nullptr, nullptr, nullptr), targets,
                                  render_cfg);

  Eigen::VectorXd g_decode(bundle.decode.parameters().size());
  Eigen::VectorXd g_sym_color(bundle.sym_color.parameters().size());
  Eigen::VectorXd g_sym_opacity(bundle.sym_opacity.parameters().size());

  double lr = loss_cfg.lr;
  for (int step = 0; step < loss_cfg.steps; ++step) {
    DecodeTraces dtr;
    SymDecodeTraces str;
    SymDecodeResult sym;
    GaussianCloud visible =
        decode_visible(inputs.points, inputs.features, bundle.decode, &dtr);
    sym = decode_symmetric(visible, inputs.features, inputs.mirrored_points, bundle,
                           &str);
    const GaussianCloud joined = concat(visible, sym.cloud);
    const std::size_t n_vis = visible.size();

    ParamGrads grads(joined.size());
    result.trace.push_back(
        evaluate_with_grads(joined, targets, loss_cfg, render_cfg, step, grads));

    g_decode.setZero();
    g_sym_color.setZero();
    g_sym_opacity.setZero();

    // Symmetric rows first: their gradient flows into the offset nets and
    // back onto the anchor (visible) parameters they offset.
    Eigen::VectorXd up_color(12), up_op(1), in_grad;
    for (std::size_t k = 0; k < sym.cloud.size(); ++k) {
      const std::size_t row = n_vis + k;
      const std::int32_t anchor = str.anchor_rows[k];
      for (int i = 0; i < 12; ++i) up_color[i] = grads.color[row][i];
      bundle.sym_color.backward(str.color[k], up_color, g_sym_color, &in_grad);
      for (int i = 0; i < 12; ++i) {
        grads.color[anchor][i] += grads.color[row][i] + in_grad[in_grad.size() - 12 + i];
      }
      up_op[0] = grads.opacity[row];
      bundle.sym_opacity.backward(str.opacity[k], up_op, g_sym_opacity, &in_grad);
      grads.opacity[anchor] += grads.opacity[row] + in_grad[in_grad.size() - 1];
    }

    // Visible rows through the 20-wide decoder head; only the opacity and
    // color slots carry upstream signal.
    Eigen::VectorXd up20 = Eigen::VectorXd::Zero(20);
    for (std::size_t i = 0; i < n_vis; ++i) {
      up20[7] = grads.opacity[i];
      for (int k = 0; k < 12; ++k) up20[8 + k] = grads.color[i][k];
      bundle.decode.backward(dtr.per_point[i], up20, g_decode);
    }

    bundle.decode.parameters() -= lr * g_decode;
    bundle.sym_color.parameters() -= lr * g_sym_color;
    bundle.sym_opacity.parameters() -= lr * g_sym_opacity;
    lr *= loss_cfg.lr_decay;
  }

  result.final_psnr = mean_psnr(decode_all(nullptr, nullptr, nullptr), targets,
                                render_cfg);
  return result;
}

void write_trace_csv(const std::string& path, const std::vector<FitTraceRow>& trace) {
  std::ofstream out(path);
  if (!out) {
    throw IoError("write_trace_csv: cannot open " + path);
  }
  out << "step,total,l1_coarse,l1_target,edge,ssim_term\n";
  out.precision(17);
  for (const FitTraceRow& row : trace) {
    out << row.step << ',' << row.total << ',' << row.l1_coarse << ','
        << row.l1_target << ',' << row.edge << ',' << row.ssim_term << '\n';
  }
  if (!out) {
    throw IoError("write_trace_csv: write failed for " + path);
  }
}

}  // namespace splathead
