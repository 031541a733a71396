// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/cloud.hpp"

#include <algorithm>

#include "splathead/errors.hpp"

namespace splathead {

std::size_t GridPointCloud::valid_count() const {
  std::size_t n = 0;
  for (auto v : valid) n += (v != 0);
  return n;
}

double median_grid_spacing(const GridPointCloud& cloud) {
  std::vector<double> spacings;
  spacings.reserve(cloud.valid_count());
  for (int y = 0; y < cloud.height; ++y) {
    for (int x = 0; x < cloud.width; ++x) {
      if (!cloud.cell_valid(x, y)) continue;
      double best = -1.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= cloud.width || ny >= cloud.height) continue;
          if (!cloud.cell_valid(nx, ny)) continue;
          const double d = (cloud.at(nx, ny) - cloud.at(x, y)).norm();
          if (best < 0.0 || d < best) best = d;
        }
      }
      if (best >= 0.0) spacings.push_back(best);
    }
  }
  if (spacings.empty()) {
    throw InvalidInputError("median_grid_spacing: no adjacent valid point pairs");
  }
  const std::size_t mid = spacings.size() / 2;
  std::nth_element(spacings.begin(), spacings.begin() + mid, spacings.end());
  return spacings[mid];
}

}  // namespace splathead
