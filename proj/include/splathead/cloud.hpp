// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace splathead {

// Point cloud that remembers the image grid it was lifted from. Cell (x, y)
// of a width x height grid holds one world-space point when valid[y*w+x] is
// nonzero. Grid layout survives mirroring and deformation so that per-cell
// correspondences (e.g. between a cloud and its mirror) stay index-aligned.
struct GridPointCloud {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector3d> positions;  // width * height entries
  std::vector<std::uint8_t> valid;         // width * height entries, 0 or 1

  GridPointCloud() = default;
  GridPointCloud(int w, int h)
      : width(w),
        height(h),
        positions(static_cast<std::size_t>(w) * h, Eigen::Vector3d::Zero()),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t cell_count() const { return positions.size(); }
  std::size_t valid_count() const;

  bool cell_valid(int x, int y) const {
    return valid[static_cast<std::size_t>(y) * width + x] != 0;
  }
  Eigen::Vector3d& at(int x, int y) {
    return positions[static_cast<std::size_t>(y) * width + x];
  }
  const Eigen::Vector3d& at(int x, int y) const {
    return positions[static_cast<std::size_t>(y) * width + x];
  }
};

// Median distance between grid-adjacent valid points (8-neighborhood).
// Used as the characteristic sample spacing of a lifted cloud. Throws
// InvalidInputError when no adjacent valid pair exists.
double median_grid_spacing(const GridPointCloud& cloud);

// Per-frame expression/deformation code.
struct ExpressionCoeffs {
  Eigen::VectorXd values;

  ExpressionCoeffs() = default;
  explicit ExpressionCoeffs(int dim) : values(Eigen::VectorXd::Zero(dim)) {}
  int dim() const { return static_cast<int>(values.size()); }
};

}  // namespace splathead
