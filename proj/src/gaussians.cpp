// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/gaussians.hpp"

#include <algorithm>
#include <cmath>

#include "splathead/errors.hpp"

namespace splathead {

namespace {
constexpr double kSh0 = 0.28209479;  // 1 / (2 sqrt(pi))
constexpr double kSh1 = 0.48860251;  // sqrt(3) / (2 sqrt(pi))
}  // namespace

void GaussianCloud::resize(std::size_t n) {
  positions.resize(n, Eigen::Vector3d::Zero());
  rotations.resize(n, Quaternion::identity());
  log_scales.resize(n, Eigen::Vector3d::Zero());
  opacity_logits.resize(n, 0.0);
  color_coeffs.resize(n, std::array<double, 12>{});
  provenance.resize(n, Provenance::Visible);
  grid_index.resize(n, -1);
}

void GaussianCloud::reserve(std::size_t n) {
  positions.reserve(n);
  rotations.reserve(n);
  log_scales.reserve(n);
  opacity_logits.reserve(n);
  color_coeffs.reserve(n);
  provenance.reserve(n);
  grid_index.reserve(n);
}

void GaussianCloud::validate() const {
  const std::size_t n = positions.size();
  if (rotations.size() != n || log_scales.size() != n || opacity_logits.size() != n ||
      color_coeffs.size() != n || provenance.size() != n || grid_index.size() != n) {
    throw InvalidInputError("GaussianCloud: attribute arrays have mismatched lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!positions[i].allFinite() || !log_scales[i].allFinite() ||
        !std::isfinite(opacity_logits[i]) || !std::isfinite(rotations[i].norm())) {
      throw InvalidInputError("GaussianCloud: non-finite attribute");
    }
    for (double c : color_coeffs[i]) {
      if (!std::isfinite(c)) throw InvalidInputError("GaussianCloud: non-finite color");
    }
  }
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InvalidInputError("logit: argument must lie strictly inside (0, 1)");
  }
  return std::log(p / (1.0 - p));
}

Eigen::Matrix3d covariance(const Quaternion& r, const Eigen::Vector3d& scale) {
  if (!scale.allFinite() || !(scale.minCoeff() > 0.0)) {
    throw InvalidInputError("covariance: scales must be positive and finite");
  }
  const Eigen::Matrix3d rot = quat_to_rotation(r);
  return rot * scale.cwiseProduct(scale).asDiagonal() * rot.transpose();
}

Eigen::Vector3d eval_color(const std::array<double, 12>& c, const Eigen::Vector3d& dir) {
  const double y1 = kSh1 * -dir.y();
  const double y2 = kSh1 * dir.z();
  const double y3 = kSh1 * -dir.x();
  Eigen::Vector3d out;
  for (int ch = 0; ch < 3; ++ch) {
    const double raw = kSh0 * c[ch] + y1 * c[3 + 3 * ch] + y2 * c[4 + 3 * ch] +
                       y3 * c[5 + 3 * ch] + 0.5;
    out[ch] = std::clamp(raw, 0.0, 1.0);
  }
  return out;
}

namespace {

// Major principal axis of the covariance of (rotation, activated scale):
// the rotated unit axis of the largest scale, with a fixed sign convention
// so that densification is deterministic. Ties in the scales resolve to the
// lowest axis index.
Eigen::Vector3d major_axis(const Quaternion& r, const Eigen::Vector3d& scale) {
  int k = 0;
  for (int i = 1; i < 3; ++i) {
    if (scale[i] > scale[k]) k = i;
  }
  Eigen::Vector3d axis = quat_to_rotation(r).col(k);
  // Sign toward +y; exact zeros fall through to z then x.
  double key = axis.y();
  if (key == 0.0) key = axis.z();
  if (key == 0.0) key = axis.x();
  if (key < 0.0) axis = -axis;
  return axis;
}

}  // namespace

GaussianCloud densify(const GaussianCloud& cloud) {
  const std::size_t n = cloud.size();
  GaussianCloud out = cloud;
  out.reserve(2 * n);
  const double ln2 = std::log(2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d scale = cloud.log_scales[i].array().exp();
    const double s_max = scale.maxCoeff();
    const Eigen::Vector3d axis = major_axis(cloud.rotations[i], scale);
    out.positions.push_back(cloud.positions[i] + 0.5 * s_max * axis);
    out.rotations.push_back(cloud.rotations[i]);
    out.log_scales.push_back(cloud.log_scales[i] - Eigen::Vector3d::Constant(ln2));
    out.opacity_logits.push_back(cloud.opacity_logits[i]);
    out.color_coeffs.push_back(cloud.color_coeffs[i]);
    out.provenance.push_back(Provenance::Child);
    out.grid_index.push_back(cloud.grid_index[i]);
  }
  return out;
}

GaussianCloud concat(const GaussianCloud& a, const GaussianCloud& b) {
  GaussianCloud out = a;
  out.positions.insert(out.positions.end(), b.positions.begin(), b.positions.end());
  out.rotations.insert(out.rotations.end(), b.rotations.begin(), b.rotations.end());
  out.log_scales.insert(out.log_scales.end(), b.log_scales.begin(), b.log_scales.end());
  out.opacity_logits.insert(out.opacity_logits.end(), b.opacity_logits.begin(),
                            b.opacity_logits.end());
  out.color_coeffs.insert(out.color_coeffs.end(), b.color_coeffs.begin(),
                          b.color_coeffs.end());
  out.provenance.insert(out.provenance.end(), b.provenance.begin(), b.provenance.end());
  out.grid_index.insert(out.grid_index.end(), b.grid_index.begin(), b.grid_index.end());
  return out;
}

GaussianCloud seed_gaussians(const GridPointCloud& cloud, const GeomImage& color,
                             double scale, double opacity) {
  if (color.width() != cloud.width || color.height() != cloud.height ||
      color.channels() != 3) {
    throw InvalidInputError("seed_gaussians: color raster does not match the grid");
  }
  if (!(scale > 0.0)) {
    throw InvalidInputError("seed_gaussians: scale must be positive");
  }
  GaussianCloud out;
  out.reserve(cloud.valid_count());
  const double log_scale = std::log(scale);
  const double opacity_logit = logit(opacity);
  for (int y = 0; y < cloud.height; ++y) {
    for (int x = 0; x < cloud.width; ++x) {
      if (!cloud.cell_valid(x, y)) continue;
      out.positions.push_back(cloud.at(x, y));
      out.rotations.push_back(Quaternion::identity());
      out.log_scales.push_back(Eigen::Vector3d::Constant(log_scale));
      out.opacity_logits.push_back(opacity_logit);
      std::array<double, 12> c{};
      for (int ch = 0; ch < 3; ++ch) {
        c[ch] = (color.at(x, y, ch) - 0.5) / kSh0;
      }
      out.color_coeffs.push_back(c);
      out.provenance.push_back(Provenance::Visible);
      out.grid_index.push_back(y * cloud.width + x);
    }
  }
  return out;
}

}  // namespace splathead
