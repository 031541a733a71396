// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <vector>

#include "doctest.h"

#include "splathead/errors.hpp"
#include "splathead/symmetry.hpp"

using namespace splathead;

namespace {

std::int64_t vidx(double coord, double size) {
  return static_cast<std::int64_t>(std::floor(coord / size));
}

// Direct O(originals x mirrored) restatement of the two removal rules,
// sharing no code or data structures with the accelerated filter.
struct BruteForceOutcome {
  std::vector<std::uint8_t> keep;
  std::size_t removed_adjacent = 0;
  std::size_t removed_occluded = 0;
};

BruteForceOutcome brute_force_filter(const GridPointCloud& original,
                                     const GridPointCloud& mirrored,
                                     const VoxelFilterConfig& cfg) {
  BruteForceOutcome out;
  out.keep.assign(mirrored.cell_count(), 0);
  for (std::size_t i = 0; i < mirrored.cell_count(); ++i) {
    if (!mirrored.valid[i]) continue;
    const Eigen::Vector3d& m = mirrored.positions[i];
    const std::int64_t mx = vidx(m.x(), cfg.voxel_size);
    const std::int64_t my = vidx(m.y(), cfg.voxel_size);
    const std::int64_t mz = vidx(m.z(), cfg.voxel_size);

    bool adjacent = false;
    bool occluded = false;
    for (std::size_t j = 0; j < original.cell_count(); ++j) {
      if (!original.valid[j]) continue;
      const Eigen::Vector3d& p = original.positions[j];
      const std::int64_t px = vidx(p.x(), cfg.voxel_size);
      const std::int64_t py = vidx(p.y(), cfg.voxel_size);
      const std::int64_t pz = vidx(p.z(), cfg.voxel_size);
      if (std::llabs(px - mx) <= cfg.neighborhood_radius &&
          std::llabs(py - my) <= cfg.neighborhood_radius &&
          std::llabs(pz - mz) <= cfg.neighborhood_radius) {
        adjacent = true;
      }
      if (px == mx && py == my && p.z() > m.z() + cfg.z_margin) {
        occluded = true;
      }
    }
    if (adjacent) {
      ++out.removed_adjacent;
    } else if (occluded) {
      ++out.removed_occluded;
    } else {
      out.keep[i] = 1;
    }
  }
  return out;
}

GridPointCloud random_cloud(std::mt19937_64& rng, int w, int h, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  GridPointCloud cloud(w, h);
  for (std::size_t i = 0; i < cloud.cell_count(); ++i) {
    if ((rng() & 3) == 0) continue;  // leave some cells invalid
    cloud.valid[i] = 1;
    cloud.positions[i] = Eigen::Vector3d(u(rng), u(rng), u(rng));
  }
  return cloud;
}

}  // namespace

TEST_CASE("voxel filter matches the brute-force rules on random clouds") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> usize(0.05, 0.5);
  for (int trial = 0; trial < 60; ++trial) {
    const int w = 5 + static_cast<int>(rng() % 16);
    const int h = 5 + static_cast<int>(rng() % 16);
    const GridPointCloud original = random_cloud(rng, w, h, 1.0);
    // Alternate between true mirrors and unrelated clouds of the same grid.
    const GridPointCloud mirrored =
        (trial & 1) ? random_cloud(rng, w, h, 1.0) : mirror_x(original);

    VoxelFilterConfig cfg;
    cfg.voxel_size = usize(rng);
    cfg.neighborhood_radius = static_cast<int>(rng() % 3);
    cfg.z_margin = 0.05 * static_cast<double>(rng() % 5);

    const VoxelFilterResult fast = voxel_filter(original, mirrored, cfg);
    const BruteForceOutcome slow = brute_force_filter(original, mirrored, cfg);

    REQUIRE(fast.survivors.cell_count() == mirrored.cell_count());
    CHECK(fast.removed_adjacent == slow.removed_adjacent);
    CHECK(fast.removed_occluded == slow.removed_occluded);
    CHECK_FALSE(fast.empty_original);
    for (std::size_t i = 0; i < mirrored.cell_count(); ++i) {
      REQUIRE(fast.survivors.valid[i] == slow.keep[i]);
      if (fast.survivors.valid[i]) {
        CHECK(fast.survivors.positions[i] == mirrored.positions[i]);
      }
    }
  }
}

TEST_CASE("perfectly symmetric cloud leaves no mirrored survivors") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GridPointCloud cloud(20, 10);
  for (int i = 0; i < 100; ++i) {
    const double x = u(rng), y = u(rng), z = u(rng);
    cloud.valid[2 * i] = 1;
    cloud.positions[2 * i] = Eigen::Vector3d(x, y, z);
    cloud.valid[2 * i + 1] = 1;
    cloud.positions[2 * i + 1] = Eigen::Vector3d(-x, y, z);
  }
  VoxelFilterConfig cfg;
  cfg.voxel_size = 0.1;
  const SymmetricCompletion done = symmetric_complete(cloud, cfg);
  CHECK(done.mirrored.valid_count() == 0);
  CHECK(done.report.removed_adjacent == cloud.valid_count());
  CHECK(done.report.removed_occluded == 0);
  CHECK(done.visible.positions == cloud.positions);
}

TEST_CASE("disjoint half survives in full") {
  GridPointCloud cloud(1, 1);
  cloud.valid[0] = 1;
  cloud.positions[0] = Eigen::Vector3d(1.0, 0.0, 0.0);
  VoxelFilterConfig cfg;
  cfg.voxel_size = 0.1;
  const SymmetricCompletion done = symmetric_complete(cloud, cfg);
  REQUIRE(done.mirrored.valid_count() == 1);
  CHECK(done.mirrored.positions[0] == Eigen::Vector3d(-1.0, 0.0, 0.0));
  CHECK(done.report.removed_adjacent == 0);
  CHECK(done.report.removed_occluded == 0);
}

TEST_CASE("occlusion rule direction and margin") {
  // Original point deep in the column; mirrored point in front of it.
  GridPointCloud original(2, 1), mirrored(2, 1);
  original.valid[0] = 1;
  original.positions[0] = Eigen::Vector3d(5.0, 0.02, 3.0);  // far +z
  mirrored.valid[0] = 1;
  mirrored.positions[0] = Eigen::Vector3d(5.0, 0.02, 1.0);  // nearer the camera

  VoxelFilterConfig cfg;
  cfg.voxel_size = 0.05;
  cfg.neighborhood_radius = 0;  // same-voxel only; points share (x, y) not z
  cfg.z_margin = 0.5;
  VoxelFilterResult res = voxel_filter(original, mirrored, cfg);
  CHECK(res.removed_occluded == 1);
  CHECK(res.survivors.valid_count() == 0);

  // A margin larger than the depth gap protects the mirrored point.
  cfg.z_margin = 2.5;
  res = voxel_filter(original, mirrored, cfg);
  CHECK(res.removed_occluded == 0);
  CHECK(res.survivors.valid_count() == 1);

  // Behind the original geometry is never occlusion.
  std::swap(original.positions[0], mirrored.positions[0]);
  cfg.z_margin = 0.5;
  res = voxel_filter(original, mirrored, cfg);
  CHECK(res.removed_occluded == 0);
  CHECK(res.survivors.valid_count() == 1);
}

TEST_CASE("empty original passes the mirror through with a flag") {
  GridPointCloud original(3, 3);  // all invalid
  GridPointCloud mirrored(3, 3);
  mirrored.valid[4] = 1;
  mirrored.positions[4] = Eigen::Vector3d(0.3, 0.1, 0.2);
  VoxelFilterConfig cfg;
  cfg.voxel_size = 0.1;
  const VoxelFilterResult res = voxel_filter(original, mirrored, cfg);
  CHECK(res.empty_original);
  CHECK(res.survivors.valid == mirrored.valid);
  CHECK(res.survivors.positions == mirrored.positions);
  CHECK(res.removed_adjacent == 0);
  CHECK(res.removed_occluded == 0);
}

TEST_CASE("voxel config resolution") {
  GridPointCloud reference(3, 1);
  reference.valid = {1, 1, 1};
  reference.at(0, 0) = Eigen::Vector3d(0.0, 0.0, 0.0);
  reference.at(1, 0) = Eigen::Vector3d(0.2, 0.0, 0.0);
  reference.at(2, 0) = Eigen::Vector3d(0.4, 0.0, 0.0);

  SUBCASE("auto voxel size is 1.5x the median spacing") {
    const VoxelFilterConfig cfg = resolve_voxel_config(reference);
    CHECK(cfg.voxel_size == doctest::Approx(0.3));
    CHECK(cfg.z_margin == doctest::Approx(0.15));
    CHECK(cfg.neighborhood_radius == 1);
  }

  SUBCASE("explicit values pass through") {
    const VoxelFilterConfig cfg = resolve_voxel_config(reference, 0.2, 2, 0.07);
    CHECK(cfg.voxel_size == 0.2);
    CHECK(cfg.neighborhood_radius == 2);
    CHECK(cfg.z_margin == 0.07);
  }

  SUBCASE("explicit size with auto margin") {
    const VoxelFilterConfig cfg = resolve_voxel_config(reference, 0.2, 1, -1.0);
    CHECK(cfg.z_margin == doctest::Approx(0.1));
  }

  SUBCASE("auto size needs adjacent valid points") {
    GridPointCloud sparse(3, 3);
    sparse.valid[0] = 1;
    CHECK_THROWS_AS(resolve_voxel_config(sparse), InvalidInputError);
  }
}

TEST_CASE("voxel filter validation") {
  const GridPointCloud cloud(2, 2);
  VoxelFilterConfig cfg;
  cfg.voxel_size = 0.0;
  CHECK_THROWS_AS(voxel_filter(cloud, cloud, cfg), InvalidInputError);
  cfg.voxel_size = 0.1;
  cfg.neighborhood_radius = -1;
  CHECK_THROWS_AS(voxel_filter(cloud, cloud, cfg), InvalidInputError);
}
