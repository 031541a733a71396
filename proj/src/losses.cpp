// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/losses.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "splathead/errors.hpp"

namespace splathead {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

void check_pair(const GeomImage& a, const GeomImage& b, const char* who) {
  if (!a.same_shape(b)) {
    throw InvalidInputError(std::string(who) + ": image shapes disagree");
  }
  if (a.width() == 0 || a.height() == 0) {
    throw InvalidInputError(std::string(who) + ": empty image");
  }
}

inline double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// One plane (channel) of an image as a contiguous buffer.
std::vector<double> plane(const GeomImage& img, int ch) {
  std::vector<double> out(static_cast<std::size_t>(img.width()) * img.height());
  std::size_t k = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) out[k++] = img.at(x, y, ch);
  }
  return out;
}

struct SeparableFilter {
  std::vector<double> kernel;  // unnormalized symmetric taps, length 2r+1
  int radius = 0;

  SeparableFilter(int window, double sigma) {
    radius = window / 2;
    kernel.resize(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) {
      kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    }
  }

  // Row-stochastic filtering along one axis: taps falling outside the image
  // are dropped and the remaining ones renormalized, which matches a
  // truncated window whose weights are rescaled to sum to 1.
  void normalized_1d(const std::vector<double>& in, std::vector<double>& out, int n,
                     int stride, int count, int base_stride) const {
    for (int line = 0; line < count; ++line) {
      const std::size_t base = static_cast<std::size_t>(line) * base_stride;
      for (int i = 0; i < n; ++i) {
        double acc = 0.0, norm = 0.0;
        const int lo = std::max(-radius, -i), hi = std::min(radius, n - 1 - i);
        for (int k = lo; k <= hi; ++k) {
          const double w = kernel[k + radius];
          acc += w * in[base + static_cast<std::size_t>(i + k) * stride];
          norm += w;
        }
        out[base + static_cast<std::size_t>(i) * stride] = acc / norm;
      }
    }
  }

  // Adjoint of normalized_1d: out_q = sum_p kernel(q - p) / norm(p) * in_p.
  void adjoint_1d(const std::vector<double>& in, std::vector<double>& out, int n,
                  int stride, int count, int base_stride) const {
    std::vector<double> scaled(in.size());
    for (int line = 0; line < count; ++line) {
      const std::size_t base = static_cast<std::size_t>(line) * base_stride;
      for (int i = 0; i < n; ++i) {
        double norm = 0.0;
        const int lo = std::max(-radius, -i), hi = std::min(radius, n - 1 - i);
        for (int k = lo; k <= hi; ++k) norm += kernel[k + radius];
        scaled[base + static_cast<std::size_t>(i) * stride] =
            in[base + static_cast<std::size_t>(i) * stride] / norm;
      }
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        const int lo = std::max(-radius, -i), hi = std::min(radius, n - 1 - i);
        for (int k = lo; k <= hi; ++k) {
          acc += kernel[k + radius] *
                 scaled[base + static_cast<std::size_t>(i + k) * stride];
        }
        out[base + static_cast<std::size_t>(i) * stride] = acc;
      }
    }
  }

  std::vector<double> filter2d(const std::vector<double>& in, int w, int h) const {
    std::vector<double> tmp(in.size()), out(in.size());
    normalized_1d(in, tmp, w, 1, h, w);        // along x, per row
    normalized_1d(tmp, out, h, w, w, 1);       // along y, per column
    return out;
  }

  std::vector<double> adjoint2d(const std::vector<double>& in, int w, int h) const {
    std::vector<double> tmp(in.size()), out(in.size());
    adjoint_1d(in, tmp, h, w, w, 1);           // transpose of the y pass
    adjoint_1d(tmp, out, w, 1, h, w);          // transpose of the x pass
    return out;
  }
};

}  // namespace

double l1_loss(const GeomImage& a, const GeomImage& b, GeomImage* grad_a) {
  check_pair(a, b, "l1_loss");
  const std::size_t n = a.data().size();
  if (grad_a) *grad_a = GeomImage(a.width(), a.height(), a.channels(), a.kind());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.data()[i] - b.data()[i];
    sum += std::abs(d);
    if (grad_a) grad_a->data()[i] = sign0(d) / static_cast<double>(n);
  }
  return sum / static_cast<double>(n);
}

double ssim(const GeomImage& a, const GeomImage& b, int window, double sigma,
            GeomImage* grad_a) {
  check_pair(a, b, "ssim");
  if (window < 1 || window % 2 == 0 || !(sigma > 0.0)) {
    throw InvalidInputError("ssim: window must be odd and positive, sigma > 0");
  }
  const int w = a.width(), h = a.height(), channels = a.channels();
  const std::size_t npix = static_cast<std::size_t>(w) * h;
  const double inv_count = 1.0 / (static_cast<double>(npix) * channels);
  const SeparableFilter filter(window, sigma);

  if (grad_a) *grad_a = GeomImage(w, h, channels, a.kind());

  double total = 0.0;
  for (int ch = 0; ch < channels; ++ch) {
    const std::vector<double> x = plane(a, ch);
    const std::vector<double> y = plane(b, ch);
    std::vector<double> xx(npix), yy(npix), xy(npix);
    for (std::size_t i = 0; i < npix; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const std::vector<double> mx = filter.filter2d(x, w, h);
    const std::vector<double> my = filter.filter2d(y, w, h);
    const std::vector<double> mxx = filter.filter2d(xx, w, h);
    const std::vector<double> myy = filter.filter2d(yy, w, h);
    const std::vector<double> mxy = filter.filter2d(xy, w, h);

    std::vector<double> d_mu(grad_a ? npix : 0), d_vx(grad_a ? npix : 0),
        d_cxy(grad_a ? npix : 0);

    for (std::size_t i = 0; i < npix; ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cxy = mxy[i] - mx[i] * my[i];
      const double a1 = 2.0 * mx[i] * my[i] + kC1;
      const double a2 = 2.0 * cxy + kC2;
      const double b1 = mx[i] * mx[i] + my[i] * my[i] + kC1;
      const double b2 = vx + vy + kC2;
      const double denom = b1 * b2;
      total += (a1 * a2) / denom;

      if (grad_a) {
        const double ds_da1 = a2 / denom;
        const double ds_da2 = a1 / denom;
        const double ds_db1 = -(a1 * a2) / (b1 * b1 * b2);
        const double ds_db2 = -(a1 * a2) / (b1 * b2 * b2);
        const double ds_dmu = ds_da1 * 2.0 * my[i] + ds_db1 * 2.0 * mx[i];
        const double ds_dvx = ds_db2;
        const double ds_dcxy = ds_da2 * 2.0;
        // vx and cxy also read mu_x through the centering terms.
        d_mu[i] = ds_dmu - 2.0 * mx[i] * ds_dvx - my[i] * ds_dcxy;
        d_vx[i] = ds_dvx;
        d_cxy[i] = ds_dcxy;
      }
    }

    if (grad_a) {
      const std::vector<double> g_mu = filter.adjoint2d(d_mu, w, h);
      const std::vector<double> g_vx = filter.adjoint2d(d_vx, w, h);
      const std::vector<double> g_cxy = filter.adjoint2d(d_cxy, w, h);
      std::size_t i = 0;
      for (int yy_ = 0; yy_ < h; ++yy_) {
        for (int xx_ = 0; xx_ < w; ++xx_, ++i) {
          grad_a->at(xx_, yy_, ch) =
              inv_count * (g_mu[i] + 2.0 * x[i] * g_vx[i] + y[i] * g_cxy[i]);
        }
      }
    }
  }
  return total * inv_count;
}

double edge_loss(const GeomImage& a, const GeomImage& b, GeomImage* grad_a) {
  check_pair(a, b, "edge_loss");
  const int w = a.width(), h = a.height(), channels = a.channels();
  const std::size_t nx = w > 1 ? static_cast<std::size_t>(w - 1) * h * channels : 0;
  const std::size_t ny = h > 1 ? static_cast<std::size_t>(w) * (h - 1) * channels : 0;
  if (nx + ny == 0) {
    throw InvalidInputError("edge_loss: image too small for finite differences");
  }
  if (grad_a) *grad_a = GeomImage(w, h, channels, a.kind());
  const double inv = 1.0 / static_cast<double>(nx + ny);
  double sum = 0.0;
  for (int ch = 0; ch < channels; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x + 1 < w; ++x) {
        const double ga = a.at(x + 1, y, ch) - a.at(x, y, ch);
        const double gb = b.at(x + 1, y, ch) - b.at(x, y, ch);
        sum += std::abs(ga - gb);
        if (grad_a) {
          const double s = sign0(ga - gb) * inv;
          grad_a->at(x + 1, y, ch) += s;
          grad_a->at(x, y, ch) -= s;
        }
      }
    }
    for (int y = 0; y + 1 < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double ga = a.at(x, y + 1, ch) - a.at(x, y, ch);
        const double gb = b.at(x, y + 1, ch) - b.at(x, y, ch);
        sum += std::abs(ga - gb);
        if (grad_a) {
          const double s = sign0(ga - gb) * inv;
          grad_a->at(x, y + 1, ch) += s;
          grad_a->at(x, y, ch) -= s;
        }
      }
    }
  }
  return sum * inv;
}

TotalLossBreakdown total_loss(const GeomImage& coarse, const GeomImage& target,
                              const GeomImage& gt, const LossConfig& cfg,
                              GeomImage* grad_coarse, GeomImage* grad_target) {
  TotalLossBreakdown out;
  GeomImage g_l1c, g_l1t, g_ec, g_et, g_ssim;
  out.l1_coarse = l1_loss(coarse, gt, grad_coarse ? &g_l1c : nullptr);
  out.l1_target = l1_loss(target, gt, grad_target ? &g_l1t : nullptr);
  out.edge_coarse = edge_loss(coarse, gt, grad_coarse ? &g_ec : nullptr);
  out.edge_target = edge_loss(target, gt, grad_target ? &g_et : nullptr);
  out.ssim_term =
      1.0 - ssim(target, gt, cfg.ssim_window, cfg.ssim_sigma,
                 grad_target ? &g_ssim : nullptr);
  out.total = out.l1_coarse + out.l1_target +
              cfg.lambda_p * (out.edge_coarse + out.edge_target) +
              cfg.lambda_ssim * out.ssim_term;

  if (grad_coarse) {
    *grad_coarse = GeomImage(coarse.width(), coarse.height(), coarse.channels(),
                             coarse.kind());
    for (std::size_t i = 0; i < grad_coarse->data().size(); ++i) {
      grad_coarse->data()[i] = g_l1c.data()[i] + cfg.lambda_p * g_ec.data()[i];
    }
  }
  if (grad_target) {
    *grad_target = GeomImage(target.width(), target.height(), target.channels(),
                             target.kind());
    for (std::size_t i = 0; i < grad_target->data().size(); ++i) {
      grad_target->data()[i] = g_l1t.data()[i] + cfg.lambda_p * g_et.data()[i] -
                               cfg.lambda_ssim * g_ssim.data()[i];
    }
  }
  return out;
}

double psnr(const GeomImage& a, const GeomImage& b) {
  check_pair(a, b, "psnr");
  double mse = 0.0;
  const std::size_t n = a.data().size();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.data()[i] - b.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace splathead
