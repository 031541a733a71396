// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/bini.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "splathead/errors.hpp"
#include "splathead/gaussians.hpp"

namespace splathead {

namespace {

constexpr double kMinNz = 1e-3;

// One unknown per masked pixel, with precomputed neighbor links and target
// gradients. Neighbor slots hold the unknown index or -1 when the neighbor
// is outside the mask.
struct System {
  int n = 0;
  std::vector<int> right, left, down, up;  // +x, -x, +y, -y neighbors
  std::vector<double> p, q;                // target gradients
  std::vector<double> anchor;              // input depth on the mask
  double lambda = 0.0;
};

struct Weights {
  // Per unknown: forward/backward weight in x and y. Inactive terms carry 0.
  std::vector<double> xp, xm, yp, ym;
};

Weights compute_weights(const System& sys, const std::vector<double>& z, double k,
                        bool bilateral) {
  Weights w;
  w.xp.assign(sys.n, 0.0);
  w.xm.assign(sys.n, 0.0);
  w.yp.assign(sys.n, 0.0);
  w.ym.assign(sys.n, 0.0);
  for (int i = 0; i < sys.n; ++i) {
    const int r = sys.right[i], l = sys.left[i];
    if (r >= 0 && l >= 0) {
      const double rp = z[r] - z[i] - sys.p[i];
      const double rm = z[i] - z[l] - sys.p[i];
      const double wp = bilateral ? logistic(k * (rm * rm - rp * rp)) : 0.5;
      w.xp[i] = wp;
      w.xm[i] = 1.0 - wp;
    } else if (r >= 0) {
      w.xp[i] = 0.5;
    } else if (l >= 0) {
      w.xm[i] = 0.5;
    }
    const int d = sys.down[i], u = sys.up[i];
    if (d >= 0 && u >= 0) {
      const double rp = z[d] - z[i] - sys.q[i];
      const double rm = z[i] - z[u] - sys.q[i];
      const double wp = bilateral ? logistic(k * (rm * rm - rp * rp)) : 0.5;
      w.yp[i] = wp;
      w.ym[i] = 1.0 - wp;
    } else if (d >= 0) {
      w.yp[i] = 0.5;
    } else if (u >= 0) {
      w.ym[i] = 0.5;
    }
  }
  return w;
}

double objective(const System& sys, const Weights& w, const std::vector<double>& z) {
  double obj = 0.0;
  for (int i = 0; i < sys.n; ++i) {
    if (sys.right[i] >= 0) {
      const double r = z[sys.right[i]] - z[i] - sys.p[i];
      obj += w.xp[i] * r * r;
    }
    if (sys.left[i] >= 0) {
      const double r = z[i] - z[sys.left[i]] - sys.p[i];
      obj += w.xm[i] * r * r;
    }
    if (sys.down[i] >= 0) {
      const double r = z[sys.down[i]] - z[i] - sys.q[i];
      obj += w.yp[i] * r * r;
    }
    if (sys.up[i] >= 0) {
      const double r = z[i] - z[sys.up[i]] - sys.q[i];
      obj += w.ym[i] * r * r;
    }
    const double d = z[i] - sys.anchor[i];
    obj += sys.lambda * d * d;
  }
  return obj;
}

// y = (A^T W A + lambda I) x for the stacked one-sided difference rows.
void apply(const System& sys, const Weights& w, const std::vector<double>& x,
           std::vector<double>& y) {
  std::fill(y.begin(), y.end(), 0.0);
  for (int i = 0; i < sys.n; ++i) {
    if (sys.right[i] >= 0) {
      const double s = w.xp[i] * (x[sys.right[i]] - x[i]);
      y[sys.right[i]] += s;
      y[i] -= s;
    }
    if (sys.left[i] >= 0) {
      const double s = w.xm[i] * (x[i] - x[sys.left[i]]);
      y[i] += s;
      y[sys.left[i]] -= s;
    }
    if (sys.down[i] >= 0) {
      const double s = w.yp[i] * (x[sys.down[i]] - x[i]);
      y[sys.down[i]] += s;
      y[i] -= s;
    }
    if (sys.up[i] >= 0) {
      const double s = w.ym[i] * (x[i] - x[sys.up[i]]);
      y[i] += s;
      y[sys.up[i]] -= s;
    }
    y[i] += sys.lambda * x[i];
  }
}

std::vector<double> rhs(const System& sys, const Weights& w) {
  std::vector<double> b(sys.n, 0.0);
  for (int i = 0; i < sys.n; ++i) {
    if (sys.right[i] >= 0) {
      b[sys.right[i]] += w.xp[i] * sys.p[i];
      b[i] -= w.xp[i] * sys.p[i];
    }
    if (sys.left[i] >= 0) {
      b[i] += w.xm[i] * sys.p[i];
      b[sys.left[i]] -= w.xm[i] * sys.p[i];
    }
    if (sys.down[i] >= 0) {
      b[sys.down[i]] += w.yp[i] * sys.q[i];
      b[i] -= w.yp[i] * sys.q[i];
    }
    if (sys.up[i] >= 0) {
      b[i] += w.ym[i] * sys.q[i];
      b[sys.up[i]] -= w.ym[i] * sys.q[i];
    }
    b[i] += sys.lambda * sys.anchor[i];
  }
  return b;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Conjugate gradient on the SPD normal equations, warm-started at z. Throws
// when the relative residual fails to reach tol within max_iters.
void cg_solve(const System& sys, const Weights& w, std::vector<double>& z,
              double tol, int max_iters) {
  const std::vector<double> b = rhs(sys, w);
  const double b_norm = std::sqrt(dot(b, b));
  const double threshold = tol * std::max(b_norm, 1e-30);

  std::vector<double> r(sys.n), Ap(sys.n);
  apply(sys, w, z, Ap);
  for (int i = 0; i < sys.n; ++i) r[i] = b[i] - Ap[i];
  double rr = dot(r, r);
  if (std::sqrt(rr) <= threshold) return;

  std::vector<double> p = r;
  for (int iter = 0; iter < max_iters; ++iter) {
    apply(sys, w, p, Ap);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) break;  // numerically semidefinite; current z is as good as it gets
    const double alpha = rr / pAp;
    for (int i = 0; i < sys.n; ++i) {
      z[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    const double rr_new = dot(r, r);
    if (std::sqrt(rr_new) <= threshold) return;
    const double beta = rr_new / rr;
    rr = rr_new;
    for (int i = 0; i < sys.n; ++i) p[i] = r[i] + beta * p[i];
  }
  const double residual = std::sqrt(rr) / std::max(b_norm, 1e-30);
  throw NumericalError("integrate_normals: CG did not converge", residual);
}

}  // namespace

BiniResult integrate_normals(const GeomImage& depth, const GeomImage& normal,
                             const GeomImage& mask, const BiniConfig& cfg) {
  if (!depth.same_shape(mask) || depth.width() != normal.width() ||
      depth.height() != normal.height()) {
    throw InvalidInputError("integrate_normals: raster shapes disagree");
  }
  if (depth.channels() != 1 || normal.channels() != 3 || mask.channels() != 1) {
    throw InvalidInputError("integrate_normals: expected 1/3/1 channel rasters");
  }
  if (!is_binary_mask(mask)) {
    throw InvalidInputError("integrate_normals: mask must be binary");
  }
  if (!all_finite(normal) || !all_finite(depth)) {
    throw InvalidInputError("integrate_normals: non-finite input");
  }
  if (cfg.irls_iters < 1 || cfg.cg_max_iters < 1 || !(cfg.cg_tol > 0.0) ||
      cfg.data_weight < 0.0) {
    throw InvalidInputError("integrate_normals: malformed config");
  }

  const int width = depth.width(), height = depth.height();

  // Camera-facing normals have n_z < 0; a majority of positive n_z means the
  // map uses the opposite convention, so flip it wholesale.
  std::size_t pos = 0, total = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (mask.at(x, y) == 0.0) continue;
      ++total;
      if (normal.at(x, y, 2) > 0.0) ++pos;
    }
  }
  if (total == 0) {
    throw InvalidInputError("integrate_normals: empty mask");
  }
  const double flip = 2 * pos > total ? -1.0 : 1.0;

  // Unknown indices for masked pixels.
  std::vector<int> index(static_cast<std::size_t>(width) * height, -1);
  System sys;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (mask.at(x, y) != 0.0) {
        index[static_cast<std::size_t>(y) * width + x] = sys.n++;
      }
    }
  }
  sys.lambda = cfg.data_weight;
  sys.right.assign(sys.n, -1);
  sys.left.assign(sys.n, -1);
  sys.down.assign(sys.n, -1);
  sys.up.assign(sys.n, -1);
  sys.p.resize(sys.n);
  sys.q.resize(sys.n);
  sys.anchor.resize(sys.n);
  const auto at_index = [&](int x, int y) -> int {
    if (x < 0 || y < 0 || x >= width || y >= height) return -1;
    return index[static_cast<std::size_t>(y) * width + x];
  };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int i = at_index(x, y);
      if (i < 0) continue;
      sys.right[i] = at_index(x + 1, y);
      sys.left[i] = at_index(x - 1, y);
      sys.down[i] = at_index(x, y + 1);
      sys.up[i] = at_index(x, y - 1);
      const double nx = flip * normal.at(x, y, 0);
      const double ny = flip * normal.at(x, y, 1);
      double nz = flip * normal.at(x, y, 2);
      if (std::abs(nz) < kMinNz) nz = nz < 0.0 ? -kMinNz : kMinNz;
      sys.p[i] = -nx / nz;
      sys.q[i] = -ny / nz;
      sys.anchor[i] = depth.at(x, y);
    }
  }

  std::vector<double> z = sys.anchor;
  BiniResult result;
  result.normals_flipped = flip < 0.0;
  result.objective_trace.push_back(
      objective(sys, compute_weights(sys, z, cfg.k, cfg.bilateral), z));

  for (int it = 0; it < cfg.irls_iters; ++it) {
    const Weights w = compute_weights(sys, z, cfg.k, cfg.bilateral);
    std::vector<double> z_new = z;
    cg_solve(sys, w, z_new, cfg.cg_tol, cfg.cg_max_iters);
    const double f_new =
        objective(sys, compute_weights(sys, z_new, cfg.k, cfg.bilateral), z_new);
    const double f_old = result.objective_trace.back();
    // Reweighting is a fixed rule, not a descent step; reject an iterate that
    // would push the self-consistent objective back up.
    if (f_new > f_old * (1.0 + 1e-12)) break;
    z = std::move(z_new);
    result.objective_trace.push_back(f_new);
    if (f_old - f_new <= 1e-15 * std::max(std::abs(f_old), 1.0)) break;
  }

  result.depth = depth;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int i = at_index(x, y);
      if (i >= 0) result.depth.at(x, y) = z[i];
    }
  }
  return result;
}

GeomImage normals_to_pixel_slopes(const GeomImage& normal, const GeomImage& depth,
                                  const GeomImage& mask, const Camera& camera) {
  if (normal.width() != depth.width() || normal.height() != depth.height() ||
      !depth.same_shape(mask)) {
    throw InvalidInputError("normals_to_pixel_slopes: raster shapes disagree");
  }
  if (normal.channels() != 3 || depth.channels() != 1 || mask.channels() != 1) {
    throw InvalidInputError("normals_to_pixel_slopes: expected 3/1/1 channel rasters");
  }
  if (!is_binary_mask(mask)) {
    throw InvalidInputError("normals_to_pixel_slopes: mask must be binary");
  }
  if (!(camera.fx > 0.0) || !(camera.fy > 0.0)) {
    throw InvalidInputError("normals_to_pixel_slopes: focal lengths must be positive");
  }
  std::vector<double> depths;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (mask.at(x, y) != 0.0) depths.push_back(depth.at(x, y));
    }
  }
  if (depths.empty()) throw InvalidInputError("normals_to_pixel_slopes: empty mask");
  std::nth_element(depths.begin(), depths.begin() + depths.size() / 2, depths.end());
  const double z_med = depths[depths.size() / 2];
  if (!(z_med > 0.0)) {
    throw InvalidInputError("normals_to_pixel_slopes: nonpositive median depth");
  }

  GeomImage out = normal;
  const double sx = z_med / camera.fx, sy = z_med / camera.fy;
  for (int y = 0; y < normal.height(); ++y) {
    for (int x = 0; x < normal.width(); ++x) {
      if (mask.at(x, y) == 0.0) continue;
      Eigen::Vector3d n(normal.at(x, y, 0) * sx, normal.at(x, y, 1) * sy,
                        normal.at(x, y, 2));
      const double len = n.norm();
      if (len > 0.0) n /= len;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = n[c];
    }
  }
  return out;
}

GridPointCloud backproject_grid(const GeomImage& depth, const GeomImage& mask,
                                const Camera& camera) {
  if (!depth.same_shape(mask) || depth.channels() != 1 || mask.channels() != 1) {
    throw InvalidInputError("backproject_grid: raster shapes disagree");
  }
  if (!is_binary_mask(mask)) {
    throw InvalidInputError("backproject_grid: mask must be binary");
  }
  GridPointCloud cloud(depth.width(), depth.height());
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (mask.at(x, y) == 0.0) continue;
      const double d = depth.at(x, y);
      if (!(d > 0.0)) {
        throw InvalidInputError("backproject_grid: nonpositive depth on the mask");
      }
      cloud.at(x, y) = unproject(camera, x + 0.5, y + 0.5, d);
      cloud.valid[static_cast<std::size_t>(y) * depth.width() + x] = 1;
    }
  }
  return cloud;
}

GridPointCloud reconstruct(const GeomImage& depth, const GeomImage& normal,
                           const GeomImage& mask, const Camera& camera,
                           const BiniConfig& cfg) {
  const BiniResult refined = integrate_normals(depth, normal, mask, cfg);
  return backproject_grid(refined.depth, mask, camera);
}

}  // namespace splathead
