// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/symmetry.hpp"

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <unordered_set>

#include "splathead/errors.hpp"

namespace splathead {

GridPointCloud mirror_x(const GridPointCloud& cloud) {
  GridPointCloud out = cloud;
  for (std::size_t i = 0; i < out.positions.size(); ++i) {
    if (out.valid[i]) out.positions[i].x() = -out.positions[i].x();
  }
  return out;
}

VoxelFilterConfig resolve_voxel_config(const GridPointCloud& reference,
                                       double voxel_size, int neighborhood_radius,
                                       double z_margin) {
  VoxelFilterConfig cfg;
  cfg.voxel_size = voxel_size > 0.0 ? voxel_size : 1.5 * median_grid_spacing(reference);
  cfg.neighborhood_radius = neighborhood_radius;
  cfg.z_margin = z_margin >= 0.0 ? z_margin : 0.5 * cfg.voxel_size;
  return cfg;
}

namespace {

inline std::int64_t voxel_index(double coord, double size) {
  return static_cast<std::int64_t>(std::floor(coord / size));
}

// 3D voxel index packed into a hashable key. 21 bits per axis leaves head
// room of ~1e6 voxels each way, far beyond desk-scale scenes.
inline std::uint64_t pack3(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
  constexpr std::int64_t kBias = 1ll << 20;
  constexpr std::uint64_t kMask = (1ull << 21) - 1;
  return ((static_cast<std::uint64_t>(ix + kBias) & kMask) << 42) |
         ((static_cast<std::uint64_t>(iy + kBias) & kMask) << 21) |
         (static_cast<std::uint64_t>(iz + kBias) & kMask);
}

inline std::uint64_t pack2(std::int64_t ix, std::int64_t iy) {
  constexpr std::int64_t kBias = 1ll << 20;
  constexpr std::uint64_t kMask = (1ull << 21) - 1;
  return ((static_cast<std::uint64_t>(ix + kBias) & kMask) << 21) |
         (static_cast<std::uint64_t>(iy + kBias) & kMask);
}

}  // namespace

VoxelFilterResult voxel_filter(const GridPointCloud& original,
                               const GridPointCloud& mirrored,
                               const VoxelFilterConfig& cfg) {
  if (!(cfg.voxel_size > 0.0) || !std::isfinite(cfg.voxel_size)) {
    throw InvalidInputError("voxel_filter: voxel_size must be positive");
  }
  if (cfg.neighborhood_radius < 0) {
    throw InvalidInputError("voxel_filter: neighborhood_radius must be >= 0");
  }

  VoxelFilterResult result;
  result.survivors = mirrored;
  if (original.valid_count() == 0) {
    result.empty_original = true;
    return result;
  }

  // Index the original cloud: occupied voxels for the adjacency rule and the
  // per-(x, y)-column depth maximum for the occlusion rule.
  std::unordered_set<std::uint64_t> occupied;
  std::unordered_map<std::uint64_t, double> column_max_z;
  occupied.reserve(original.valid_count() * 2);
  for (std::size_t i = 0; i < original.positions.size(); ++i) {
    if (!original.valid[i]) continue;
    const Eigen::Vector3d& p = original.positions[i];
    const std::int64_t ix = voxel_index(p.x(), cfg.voxel_size);
    const std::int64_t iy = voxel_index(p.y(), cfg.voxel_size);
    const std::int64_t iz = voxel_index(p.z(), cfg.voxel_size);
    occupied.insert(pack3(ix, iy, iz));
    auto [it, inserted] = column_max_z.try_emplace(pack2(ix, iy), p.z());
    if (!inserted && p.z() > it->second) it->second = p.z();
  }

  const int r = cfg.neighborhood_radius;
  for (std::size_t i = 0; i < result.survivors.positions.size(); ++i) {
    if (!result.survivors.valid[i]) continue;
    const Eigen::Vector3d& m = result.survivors.positions[i];
    const std::int64_t ix = voxel_index(m.x(), cfg.voxel_size);
    const std::int64_t iy = voxel_index(m.y(), cfg.voxel_size);
    const std::int64_t iz = voxel_index(m.z(), cfg.voxel_size);

    bool adjacent = false;
    for (std::int64_t dx = -r; dx <= r && !adjacent; ++dx) {
      for (std::int64_t dy = -r; dy <= r && !adjacent; ++dy) {
        for (std::int64_t dz = -r; dz <= r && !adjacent; ++dz) {
          adjacent = occupied.count(pack3(ix + dx, iy + dy, iz + dz)) != 0;
        }
      }
    }
    if (adjacent) {
      result.survivors.valid[i] = 0;
      ++result.removed_adjacent;
      continue;
    }

    const auto it = column_max_z.find(pack2(ix, iy));
    if (it != column_max_z.end() && it->second > m.z() + cfg.z_margin) {
      result.survivors.valid[i] = 0;
      ++result.removed_occluded;
    }
  }
  return result;
}

SymmetricCompletion symmetric_complete(const GridPointCloud& cloud,
                                       const VoxelFilterConfig& cfg) {
  SymmetricCompletion out;
  out.visible = cloud;
  out.report = voxel_filter(cloud, mirror_x(cloud), cfg);
  out.mirrored = out.report.survivors;
  return out;
}

}  // namespace splathead
