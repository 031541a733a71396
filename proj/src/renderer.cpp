// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "splathead/errors.hpp"
#include "splathead/threads.hpp"

namespace splathead {

namespace {

constexpr double kSh0 = 0.28209479;
constexpr double kSh1 = 0.48860251;

// Compositing stops once transmittance drops below this. Far below every
// comparison tolerance used against the reference path.
constexpr double kTransmittanceCutoff = 1e-9;

struct ShBasis {
  double y1, y2, y3;
};

ShBasis sh_basis(const Eigen::Vector3d& dir) {
  return {kSh1 * -dir.y(), kSh1 * dir.z(), kSh1 * -dir.x()};
}

std::vector<Splat2D> project_all(const GaussianCloud& cloud, const Camera& camera,
                                 const RenderConfig& cfg) {
  std::vector<Splat2D> splats;
  splats.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (auto s = project_gaussian(cloud, i, camera, cfg)) {
      splats.push_back(*s);
    }
  }
  std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.source_index < b.source_index;
  });
  return splats;
}

inline double mahalanobis(const Splat2D& s, double dx, double dy) {
  return s.inv_a * dx * dx + 2.0 * s.inv_b * dx * dy + s.inv_c * dy * dy;
}

void check_render_inputs(const GaussianCloud& cloud, const Camera& camera,
                         const RenderConfig& cfg) {
  cloud.validate();
  if (camera.width <= 0 || camera.height <= 0) {
    throw InvalidInputError("render: camera raster size must be positive");
  }
  if (cfg.tile_size < 1 || !(cfg.alpha_ceil > 0.0 && cfg.alpha_ceil < 1.0) ||
      !(cfg.alpha_floor > 0.0 && cfg.alpha_floor < cfg.alpha_ceil)) {
    throw InvalidInputError("render: malformed config");
  }
}

}  // namespace

std::optional<Splat2D> project_gaussian(const GaussianCloud& cloud, std::size_t index,
                                        const Camera& camera, const RenderConfig& cfg) {
  const Eigen::Matrix3d w = camera.rotation_matrix();
  const Eigen::Vector3d p_cam = w * cloud.positions[index] + camera.translation;
  if (!(p_cam.z() > cfg.z_near)) return std::nullopt;

  const double alpha_base = logistic(cloud.opacity_logits[index]);
  // A splat whose peak alpha cannot reach the floor never contributes.
  if (alpha_base < cfg.alpha_floor) return std::nullopt;

  const double z = p_cam.z();
  const double u = camera.fx * p_cam.x() / z + camera.cx;
  const double v = camera.fy * p_cam.y() / z + camera.cy;

  const Eigen::Vector3d scale = cloud.log_scales[index].array().exp();
  const Eigen::Matrix3d sigma = covariance(cloud.rotations[index], scale);

  Eigen::Matrix<double, 2, 3> jac;
  jac << camera.fx / z, 0.0, -camera.fx * p_cam.x() / (z * z),
         0.0, camera.fy / z, -camera.fy * p_cam.y() / (z * z);
  const Eigen::Matrix<double, 2, 3> t = jac * w;
  Eigen::Matrix2d cov2d = t * sigma * t.transpose();
  cov2d(0, 0) += cfg.blur_floor;
  cov2d(1, 1) += cfg.blur_floor;

  // Largest eigenvalue of the symmetric 2x2.
  const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
  const double half_diff = 0.5 * (cov2d(0, 0) - cov2d(1, 1));
  const double disc = std::sqrt(half_diff * half_diff + cov2d(0, 1) * cov2d(0, 1));
  const double lambda_max = mid + disc;
  const double sigma_max = std::sqrt(lambda_max);

  // Viewport cull on the 3-sigma ellipse (pixel-center coordinates).
  const double r3 = 3.0 * sigma_max;
  if (u + r3 < 0.0 || u - r3 > camera.width || v + r3 < 0.0 || v - r3 > camera.height) {
    return std::nullopt;
  }

  const double det = cov2d(0, 0) * cov2d(1, 1) - cov2d(0, 1) * cov2d(0, 1);
  if (!(det > 0.0)) return std::nullopt;  // defensive; blur floor keeps det positive

  Splat2D s;
  s.mean = {u, v};
  s.cov = cov2d;
  s.inv_a = cov2d(1, 1) / det;
  s.inv_b = -cov2d(0, 1) / det;
  s.inv_c = cov2d(0, 0) / det;
  s.depth = z;
  s.alpha_base = alpha_base;
  // alpha_base * exp(-maha/2) >= alpha_floor <=> maha <= 2 ln(ab / floor).
  s.maha_cutoff = 2.0 * std::log(alpha_base / cfg.alpha_floor);
  s.radius = std::sqrt(s.maha_cutoff) * sigma_max;
  s.source_index = static_cast<std::int32_t>(index);

  const Eigen::Vector3d dir = (cloud.positions[index] - camera.center()).normalized();
  s.color = eval_color(cloud.color_coeffs[index], dir);
  return s;
}

RenderOutput render(const GaussianCloud& cloud, const Camera& camera,
                    const RenderConfig& cfg) {
  check_render_inputs(cloud, camera, cfg);
  const int width = camera.width, height = camera.height;
  RenderOutput out{GeomImage(width, height, 3, ImageKind::Color),
                   GeomImage(width, height, 1, ImageKind::Mask),
                   GeomImage(width, height, 1, ImageKind::Mask, 1.0)};

  const std::vector<Splat2D> splats = project_all(cloud, camera, cfg);

  const int tile = cfg.tile_size;
  const int tiles_x = (width + tile - 1) / tile;
  const int tiles_y = (height + tile - 1) / tile;
  std::vector<std::vector<std::int32_t>> bins(
      static_cast<std::size_t>(tiles_x) * tiles_y);

  for (std::int32_t si = 0; si < static_cast<std::int32_t>(splats.size()); ++si) {
    const Splat2D& s = splats[si];
    const int x0 = std::max(0, static_cast<int>(std::floor(s.mean.x() - s.radius - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(s.mean.x() + s.radius - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.mean.y() - s.radius - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(s.mean.y() + s.radius - 0.5)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / tile; ty <= y1 / tile; ++ty) {
      for (int tx = x0 / tile; tx <= x1 / tile; ++tx) {
        bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(si);
      }
    }
  }

  parallel_for(tiles_x * tiles_y, [&](int t) {
    const int tx = t % tiles_x, ty = t / tiles_x;
    const auto& bin = bins[t];
    const int px0 = tx * tile, px1 = std::min(width, px0 + tile);
    const int py0 = ty * tile, py1 = std::min(height, py0 + tile);
    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        double tr = 1.0;
        double c0 = 0.0, c1 = 0.0, c2 = 0.0;
        for (const std::int32_t si : bin) {
          const Splat2D& s = splats[si];
          const double dx = px + 0.5 - s.mean.x();
          const double dy = py + 0.5 - s.mean.y();
          const double maha = mahalanobis(s, dx, dy);
          if (maha > s.maha_cutoff) continue;
          const double alpha =
              std::min(cfg.alpha_ceil, s.alpha_base * std::exp(-0.5 * maha));
          const double w = alpha * tr;
          c0 += w * s.color[0];
          c1 += w * s.color[1];
          c2 += w * s.color[2];
          tr *= 1.0 - alpha;
          if (tr < kTransmittanceCutoff) break;
        }
        out.color.at(px, py, 0) = c0;
        out.color.at(px, py, 1) = c1;
        out.color.at(px, py, 2) = c2;
        out.alpha.at(px, py) = 1.0 - tr;
        out.transmittance.at(px, py) = tr;
      }
    }
  });
  return out;
}

RenderOutput render_reference(const GaussianCloud& cloud, const Camera& camera,
                              const RenderConfig& cfg) {
  check_render_inputs(cloud, camera, cfg);
  const int width = camera.width, height = camera.height;
  RenderOutput out{GeomImage(width, height, 3, ImageKind::Color),
                   GeomImage(width, height, 1, ImageKind::Mask),
                   GeomImage(width, height, 1, ImageKind::Mask, 1.0)};

  const std::vector<Splat2D> splats = project_all(cloud, camera, cfg);

  parallel_for(height, [&](int py) {
    for (int px = 0; px < width; ++px) {
      double tr = 1.0;
      double c0 = 0.0, c1 = 0.0, c2 = 0.0;
      for (const Splat2D& s : splats) {
        const double dx = px + 0.5 - s.mean.x();
        const double dy = py + 0.5 - s.mean.y();
        const double maha = mahalanobis(s, dx, dy);
        if (maha > s.maha_cutoff) continue;
        const double alpha =
            std::min(cfg.alpha_ceil, s.alpha_base * std::exp(-0.5 * maha));
        const double w = alpha * tr;
        c0 += w * s.color[0];
        c1 += w * s.color[1];
        c2 += w * s.color[2];
        tr *= 1.0 - alpha;
      }
      out.color.at(px, py, 0) = c0;
      out.color.at(px, py, 1) = c1;
      out.color.at(px, py, 2) = c2;
      out.alpha.at(px, py) = 1.0 - tr;
      out.transmittance.at(px, py) = tr;
    }
  });
  return out;
}

RenderGradients render_grad_color_opacity(const GaussianCloud& cloud,
                                          const Camera& camera,
                                          const GeomImage& upstream,
                                          const RenderConfig& cfg) {
  check_render_inputs(cloud, camera, cfg);
  if (upstream.width() != camera.width || upstream.height() != camera.height ||
      upstream.channels() != 3) {
    throw InvalidInputError("render_grad_color_opacity: upstream raster mismatch");
  }
  const int width = camera.width, height = camera.height;

  const std::vector<Splat2D> splats = project_all(cloud, camera, cfg);

  // Per-splat raw (pre-clamp) color channels and basis values for the
  // coefficient chain rule.
  struct ColorChain {
    double raw[3];
    ShBasis basis;
  };
  std::vector<ColorChain> chains(splats.size());
  const Eigen::Vector3d cam_center = camera.center();
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const std::int32_t src = splats[i].source_index;
    const Eigen::Vector3d dir = (cloud.positions[src] - cam_center).normalized();
    const ShBasis basis = sh_basis(dir);
    const auto& c = cloud.color_coeffs[src];
    for (int ch = 0; ch < 3; ++ch) {
      chains[i].raw[ch] = kSh0 * c[ch] + basis.y1 * c[3 + 3 * ch] +
                          basis.y2 * c[4 + 3 * ch] + basis.y3 * c[5 + 3 * ch] + 0.5;
    }
    chains[i].basis = basis;
  }

  const int tile = cfg.tile_size;
  const int tiles_x = (width + tile - 1) / tile;
  const int tiles_y = (height + tile - 1) / tile;
  std::vector<std::vector<std::int32_t>> bins(
      static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::int32_t si = 0; si < static_cast<std::int32_t>(splats.size()); ++si) {
    const Splat2D& s = splats[si];
    const int x0 = std::max(0, static_cast<int>(std::floor(s.mean.x() - s.radius - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(s.mean.x() + s.radius - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(s.mean.y() - s.radius - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(s.mean.y() + s.radius - 0.5)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / tile; ty <= y1 / tile; ++ty) {
      for (int tx = x0 / tile; tx <= x1 / tile; ++tx) {
        bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(si);
      }
    }
  }

  // Per-tile accumulators: dL/d(color rgb) and dL/d(alpha_base pre-logit)
  // per splat in the tile's bin. Merged in tile order after the parallel
  // section so the result does not depend on the worker count.
  struct SplatGrad {
    double rgb[3] = {0.0, 0.0, 0.0};
    double logit = 0.0;
  };
  std::vector<std::vector<SplatGrad>> tile_grads(bins.size());

  parallel_for(tiles_x * tiles_y, [&](int t) {
    const auto& bin = bins[t];
    if (bin.empty()) return;
    auto& grads = tile_grads[t];
    grads.assign(bin.size(), SplatGrad{});
    const int tx = t % tiles_x, ty = t / tiles_x;
    const int px0 = tx * tile, px1 = std::min(width, px0 + tile);
    const int py0 = ty * tile, py1 = std::min(height, py0 + tile);

    struct Contribution {
      std::int32_t slot;  // index into bin/grads
      double alpha, t_before, g;
      bool capped;
    };
    std::vector<Contribution> stack;
    stack.reserve(bin.size());

    for (int py = py0; py < py1; ++py) {
      for (int px = px0; px < px1; ++px) {
        stack.clear();
        double tr = 1.0;
        for (std::int32_t slot = 0; slot < static_cast<std::int32_t>(bin.size());
             ++slot) {
          const Splat2D& s = splats[bin[slot]];
          const double dx = px + 0.5 - s.mean.x();
          const double dy = py + 0.5 - s.mean.y();
          const double maha = mahalanobis(s, dx, dy);
          if (maha > s.maha_cutoff) continue;
          const double g = std::exp(-0.5 * maha);
          const double raw_alpha = s.alpha_base * g;
          const bool capped = raw_alpha >= cfg.alpha_ceil;
          const double alpha = capped ? cfg.alpha_ceil : raw_alpha;
          stack.push_back({slot, alpha, tr, g, capped});
          tr *= 1.0 - alpha;
          if (tr < kTransmittanceCutoff) break;
        }
        if (stack.empty()) continue;
        const double u0 = upstream.at(px, py, 0);
        const double u1 = upstream.at(px, py, 1);
        const double u2 = upstream.at(px, py, 2);
        double suf0 = 0.0, suf1 = 0.0, suf2 = 0.0;  // sum of later color*alpha*T
        for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
          const Splat2D& s = splats[bin[it->slot]];
          const double w = it->alpha * it->t_before;
          SplatGrad& g_out = grads[it->slot];
          g_out.rgb[0] += u0 * w;
          g_out.rgb[1] += u1 * w;
          g_out.rgb[2] += u2 * w;
          const double one_minus = 1.0 - it->alpha;
          const double v_alpha =
              u0 * (s.color[0] * it->t_before - suf0 / one_minus) +
              u1 * (s.color[1] * it->t_before - suf1 / one_minus) +
              u2 * (s.color[2] * it->t_before - suf2 / one_minus);
          if (!it->capped) {
            const double ab = s.alpha_base;
            g_out.logit += v_alpha * it->g * ab * (1.0 - ab);
          }
          suf0 += s.color[0] * w;
          suf1 += s.color[1] * w;
          suf2 += s.color[2] * w;
        }
      }
    }
  });

  RenderGradients out;
  out.color_coeffs.assign(cloud.size(), std::array<double, 12>{});
  out.opacity_logits.assign(cloud.size(), 0.0);

  for (std::size_t t = 0; t < bins.size(); ++t) {
    const auto& bin = bins[t];
    const auto& grads = tile_grads[t];
    for (std::size_t k = 0; k < grads.size(); ++k) {
      const std::int32_t si = bin[k];
      const std::int32_t row = splats[si].source_index;
      const ColorChain& chain = chains[si];
      auto& cg = out.color_coeffs[row];
      for (int ch = 0; ch < 3; ++ch) {
        // Clamped channels are flat; only pass gradient through the open interval.
        if (chain.raw[ch] <= 0.0 || chain.raw[ch] >= 1.0) continue;
        const double up = grads[k].rgb[ch];
        cg[ch] += kSh0 * up;
        cg[3 + 3 * ch] += chain.basis.y1 * up;
        cg[4 + 3 * ch] += chain.basis.y2 * up;
        cg[5 + 3 * ch] += chain.basis.y3 * up;
      }
      out.opacity_logits[row] += grads[k].logit;
    }
  }
  return out;
}

}  // namespace splathead
