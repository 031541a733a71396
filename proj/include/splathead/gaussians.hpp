// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "splathead/camera.hpp"
#include "splathead/cloud.hpp"
#include "splathead/image.hpp"

namespace splathead {

enum class Provenance : std::uint8_t { Visible = 0, Symmetric = 1, Child = 2 };

// Structure-of-arrays 3D Gaussian set. Scales are stored as logs and
// opacities as logits so that optimization is unconstrained; activated
// values are recovered with exp/logistic. Color is 12 coefficients per
// primitive: an RGB DC term plus three linear (view-dependent) terms per
// channel, laid out [dc_r, dc_g, dc_b, lin_r0..2, lin_g0..2, lin_b0..2].
struct GaussianCloud {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Quaternion> rotations;
  std::vector<Eigen::Vector3d> log_scales;
  std::vector<double> opacity_logits;
  std::vector<std::array<double, 12>> color_coeffs;
  std::vector<Provenance> provenance;
  std::vector<std::int32_t> grid_index;  // source grid cell, -1 when detached

  std::size_t size() const { return positions.size(); }
  void resize(std::size_t n);
  void reserve(std::size_t n);

  // Throws InvalidInputError if array lengths disagree or values are not finite.
  void validate() const;
};

double logistic(double x);
// Inverse of logistic; p must lie strictly inside (0, 1).
double logit(double p);

// Covariance R * diag(s^2) * R^T of a Gaussian with rotation r and activated
// (positive) scales s. r is normalized internally. Nonpositive or non-finite
// scales raise InvalidInputError.
Eigen::Matrix3d covariance(const Quaternion& r, const Eigen::Vector3d& scale);

// View-dependent color: clamp(Y0 * dc + sum_i Yi(dir) * lin_i + 0.5, 0, 1)
// per channel, with the degree-1 basis Y0 = 0.28209479,
// (Y1, Y2, Y3) = 0.48860251 * (-dir.y, dir.z, -dir.x). dir must be unit norm.
Eigen::Vector3d eval_color(const std::array<double, 12>& coeffs,
                           const Eigen::Vector3d& dir);

// One child per parent, appended after the parents (child of parent i sits at
// row size() + i). The child is displaced from the parent by half the largest
// scale along the major principal axis of the covariance, with the axis sign
// chosen so its (y, z, x) components are lexicographically positive. Child
// scales are halved (log_scales - ln 2); rotation, color, opacity and grid
// index are copied; provenance is Child.
GaussianCloud densify(const GaussianCloud& cloud);

// a followed by b, all per-primitive attributes preserved.
GaussianCloud concat(const GaussianCloud& a, const GaussianCloud& b);

// Isotropic Gaussians for the valid cells of a lifted grid cloud: DC color
// matching the cell's source pixel exactly, zero linear terms, common scale
// and opacity. Used to seed rendering or fitting before any training.
GaussianCloud seed_gaussians(const GridPointCloud& cloud, const GeomImage& color,
                             double scale, double opacity);

}  // namespace splathead
