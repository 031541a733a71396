// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "splathead/cloud.hpp"

namespace splathead {

// Mirror across the canonical sagittal plane x = 0. Grid layout and validity
// are preserved, so cell i of the result corresponds to cell i of the input.
GridPointCloud mirror_x(const GridPointCloud& cloud);

struct VoxelFilterConfig {
  double voxel_size = 0.0;      // must be > 0 (see resolve_voxel_config)
  int neighborhood_radius = 1;  // Chebyshev radius in voxel indices
  double z_margin = 0.0;        // world units; occlusion slack along +z
};

// Fills data-dependent defaults: voxel_size <= 0 becomes 1.5x the median
// grid spacing of the reference cloud, z_margin < 0 becomes half the
// resolved voxel size.
VoxelFilterConfig resolve_voxel_config(const GridPointCloud& reference,
                                       double voxel_size = 0.0,
                                       int neighborhood_radius = 1,
                                       double z_margin = -1.0);

struct VoxelFilterResult {
  GridPointCloud survivors;          // mirrored cloud minus removed points
  std::size_t removed_adjacent = 0;  // removed by the neighborhood rule
  std::size_t removed_occluded = 0;  // removed by the z-occlusion rule only
  bool empty_original = false;       // original had no valid points; nothing removed
};

// Drops mirrored points that duplicate or occlude original geometry.
// A mirrored point is removed when either
//   (a) some original point's voxel index is within a Chebyshev distance of
//       neighborhood_radius of the mirrored point's voxel index, or
//   (b) the maximum original z in the mirrored point's (x, y) voxel column
//       exceeds the mirrored point's z + z_margin, i.e. the mirrored point
//       would sit in front of original geometry along the +z view axis.
// Voxel indices are floor(coord / voxel_size) per axis (half-open cells).
// Points removed by both rules are counted under (a).
VoxelFilterResult voxel_filter(const GridPointCloud& original,
                               const GridPointCloud& mirrored,
                               const VoxelFilterConfig& cfg);

struct SymmetricCompletion {
  GridPointCloud visible;   // the input cloud, unchanged
  GridPointCloud mirrored;  // filtered mirror completion
  VoxelFilterResult report;
};

// mirror_x followed by voxel_filter against the input.
SymmetricCompletion symmetric_complete(const GridPointCloud& cloud,
                                       const VoxelFilterConfig& cfg);

}  // namespace splathead
