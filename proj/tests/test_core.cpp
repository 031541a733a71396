// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/LU>

#include "doctest.h"

#include "splathead/camera.hpp"
#include "splathead/cloud.hpp"
#include "splathead/errors.hpp"
#include "splathead/image.hpp"
#include "splathead/symmetry.hpp"
#include "splathead/threads.hpp"

using namespace splathead;

namespace {

Camera random_camera(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Camera cam;
  cam.fx = 150.0 + 50.0 * u(rng);
  cam.fy = 150.0 + 50.0 * u(rng);
  cam.cx = 64.0 + 4.0 * u(rng);
  cam.cy = 64.0 + 4.0 * u(rng);
  cam.width = 128;
  cam.height = 128;
  cam.rotation = Quaternion{1.0 + u(rng), 0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng)}
                     .normalized();
  cam.translation = Eigen::Vector3d(u(rng), u(rng), u(rng));
  return cam;
}

}  // namespace

TEST_CASE("GeomImage layout and validation") {
  CHECK_THROWS_AS(GeomImage(0, 4, 1, ImageKind::Depth), InvalidInputError);
  CHECK_THROWS_AS(GeomImage(4, -1, 1, ImageKind::Depth), InvalidInputError);
  CHECK_THROWS_AS(GeomImage(4, 4, 0, ImageKind::Depth), InvalidInputError);

  GeomImage img(3, 2, 2, ImageKind::Feature, 0.25);
  CHECK(img.data().size() == 12);
  img.at(2, 1, 1) = 7.0;
  CHECK(img.data()[(1 * 3 + 2) * 2 + 1] == 7.0);
  CHECK(img.at(0, 0, 0) == 0.25);

  GeomImage mask(2, 2, 1, ImageKind::Mask);
  mask.at(0, 0) = 1.0;
  CHECK(is_binary_mask(mask));
  mask.at(1, 1) = 0.5;
  CHECK_FALSE(is_binary_mask(mask));

  CHECK(all_finite(img));
  img.at(0, 0) = std::nan("");
  CHECK_FALSE(all_finite(img));
}

TEST_CASE("quaternion normalization and rotation") {
  CHECK_THROWS_AS((Quaternion{0, 0, 0, 0}.normalized()), InvalidInputError);
  CHECK_THROWS_AS((Quaternion{std::nan(""), 0, 0, 0}).normalized(), InvalidInputError);

  const Quaternion q{0.3, -0.5, 0.1, 0.8};
  CHECK(q.normalized().norm() == doctest::Approx(1.0).epsilon(1e-14));

  CHECK(quat_to_rotation(Quaternion::identity()).isApprox(Eigen::Matrix3d::Identity(),
                                                          1e-15));

  // 90 degrees about z: x -> y, y -> -x.
  const double s = std::sqrt(0.5);
  const Eigen::Matrix3d r = quat_to_rotation({s, 0.0, 0.0, s});
  CHECK((r * Eigen::Vector3d::UnitX() - Eigen::Vector3d::UnitY()).norm() < 1e-12);
  CHECK((r * Eigen::Vector3d::UnitY() + Eigen::Vector3d::UnitX()).norm() < 1e-12);

  // Conversion normalizes internally: q and 2q give the same rotation.
  const Quaternion q2{0.6, -1.0, 0.2, 1.6};
  CHECK(quat_to_rotation(q).isApprox(quat_to_rotation({2 * q.w, 2 * q.x, 2 * q.y,
                                                       2 * q.z}),
                                     1e-14));
  const Eigen::Matrix3d rq = quat_to_rotation(q2);
  CHECK((rq * rq.transpose()).isApprox(Eigen::Matrix3d::Identity(), 1e-13));
  CHECK(rq.determinant() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("project/unproject round trips") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const Camera cam = random_camera(rng);
    // A world point safely in front of the camera.
    const Eigen::Vector3d p_cam(u(rng), u(rng), 2.0 + u(rng));
    const Eigen::Vector3d p_world =
        cam.rotation_matrix().transpose() * (p_cam - cam.translation);
    const PixelCoord px = project(cam, p_world);
    CHECK(px.depth == doctest::Approx(p_cam.z()).epsilon(1e-12));
    const Eigen::Vector3d back = unproject(cam, px.u, px.v, px.depth);
    CHECK((back - p_world).norm() < 1e-9);

    // Projection of an unprojected pixel center returns the pixel within 1e-6.
    const double depth = 1.0 + 0.5 * (u(rng) + 1.0);
    const double pu = 13.5, pv = 97.5;
    const PixelCoord q = project(cam, unproject(cam, pu, pv, depth));
    CHECK(std::abs(q.u - pu) < 1e-6);
    CHECK(std::abs(q.v - pv) < 1e-6);
  }
}

TEST_CASE("projection rejects points behind the camera") {
  Camera cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = cam.cy = 32.0;
  cam.width = cam.height = 64;
  CHECK_THROWS_AS(project(cam, Eigen::Vector3d(0, 0, -1.0)), BehindCameraError);
  CHECK_THROWS_AS(project(cam, Eigen::Vector3d(0, 0, 0.0)), BehindCameraError);
  CHECK_THROWS_AS(unproject(cam, 1.0, 1.0, 0.0), InvalidInputError);
  CHECK_THROWS_AS(unproject(cam, 1.0, 1.0, -2.0), InvalidInputError);
}

TEST_CASE("yaw_camera orbits about the pivot") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Camera base;
  base.fx = base.fy = 140.0;
  base.cx = base.cy = 64.0;
  base.width = base.height = 128;
  base.translation = Eigen::Vector3d(0.0, 0.0, 3.0);

  SUBCASE("pivot stays on the same pixel and distance is preserved") {
    for (double yaw : {-90.0, -37.5, -5.0, 12.0, 45.0, 90.0}) {
      const Eigen::Vector3d pivot(0.2 * u(rng), 0.2 * u(rng), 0.2 * u(rng));
      const Camera turned = yaw_camera(base, yaw, pivot);
      const PixelCoord a = project(base, pivot);
      const PixelCoord b = project(turned, pivot);
      CHECK(std::abs(a.u - b.u) < 1e-9);
      CHECK(std::abs(a.v - b.v) < 1e-9);
      CHECK((turned.center() - pivot).norm() ==
            doctest::Approx((base.center() - pivot).norm()).epsilon(1e-12));
    }
  }

  SUBCASE("composition adds angles") {
    const Eigen::Vector3d pivot(0.1, -0.2, 0.05);
    const Camera two_step = yaw_camera(yaw_camera(base, 25.0, pivot), 30.0, pivot);
    const Camera one_step = yaw_camera(base, 55.0, pivot);
    CHECK(two_step.rotation_matrix().isApprox(one_step.rotation_matrix(), 1e-12));
    CHECK((two_step.center() - one_step.center()).norm() < 1e-12);
  }

  SUBCASE("yaw 0 about the origin is the identity") {
    const Camera same = yaw_camera(base, 0.0, Eigen::Vector3d::Zero());
    CHECK(same.rotation_matrix().isApprox(base.rotation_matrix(), 1e-15));
    CHECK((same.center() - base.center()).norm() == 0.0);
  }

  SUBCASE("yaw magnitude is limited") {
    CHECK_THROWS_AS(yaw_camera(base, 90.5, Eigen::Vector3d::Zero()), InvalidInputError);
    CHECK_THROWS_AS(yaw_camera(base, -120.0, Eigen::Vector3d::Zero()),
                    InvalidInputError);
  }
}

TEST_CASE("worker pool basics") {
  CHECK(worker_count() >= 1);

  SUBCASE("parallel_for touches every index exactly once") {
    const int n = 1000;
    std::vector<std::atomic<int>> hits(n);
    parallel_for(n, [&](int i) { hits[i].fetch_add(1); }, 4);
    for (int i = 0; i < n; ++i) CHECK(hits[i].load() == 1);
  }

  SUBCASE("empty and single-thread runs") {
    parallel_for(0, [&](int) { CHECK(false); });
    int sum = 0;
    parallel_for(5, [&](int i) { sum += i; }, 1);  // inline, no data race
    CHECK(sum == 10);
  }
}

TEST_CASE("median grid spacing") {
  GridPointCloud grid(3, 1);
  grid.valid = {1, 1, 1};
  grid.at(0, 0) = {0.0, 0.0, 0.0};
  grid.at(1, 0) = {1.0, 0.0, 0.0};
  grid.at(2, 0) = {3.0, 0.0, 0.0};
  // Min-neighbor distances are 1, 1, 2; the median picks the middle value.
  CHECK(median_grid_spacing(grid) == doctest::Approx(1.0));

  GridPointCloud sparse(3, 3);
  sparse.valid[0] = 1;  // single valid cell, no adjacent pair
  CHECK_THROWS_AS(median_grid_spacing(sparse), InvalidInputError);

  GridPointCloud diag(2, 2);
  diag.valid = {1, 0, 0, 1};
  diag.at(0, 0) = {0.0, 0.0, 0.0};
  diag.at(1, 1) = {1.0, 1.0, 0.0};
  CHECK(median_grid_spacing(diag) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("mirror_x is an exact involution that flips only x") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  GridPointCloud cloud(100, 100);
  for (std::size_t i = 0; i < cloud.cell_count(); ++i) {
    cloud.positions[i] = {u(rng), u(rng), u(rng)};
    cloud.valid[i] = (rng() % 4) != 0;
  }
  const GridPointCloud m = mirror_x(cloud);
  const GridPointCloud mm = mirror_x(m);
  REQUIRE(m.width == cloud.width);
  REQUIRE(m.valid == cloud.valid);
  for (std::size_t i = 0; i < cloud.cell_count(); ++i) {
    if (cloud.valid[i]) {
      CHECK(m.positions[i].x() == -cloud.positions[i].x());  // exact sign flip
      CHECK(m.positions[i].y() == cloud.positions[i].y());
      CHECK(m.positions[i].z() == cloud.positions[i].z());
    }
    CHECK(mm.positions[i] == cloud.positions[i]);
  }
}

TEST_CASE("numerical errors carry a residual") {
  const NumericalError err("solver stalled", 0.125);
  CHECK(err.residual() == 0.125);
  CHECK(std::string(err.what()) == "solver stalled");
}
