// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"

#include "splathead/bini.hpp"
#include "splathead/errors.hpp"

using namespace splathead;

namespace {

struct PlaneInputs {
  GeomImage depth, normal, mask;
};

// Plane z(x, y) = z0 + sx*x + sy*y in per-pixel units, full mask, with
// normals whose slopes match the anchor exactly.
PlaneInputs make_plane(int w, int h, double z0, double sx, double sy) {
  PlaneInputs in{GeomImage(w, h, 1, ImageKind::Depth),
                 GeomImage(w, h, 3, ImageKind::Normal),
                 GeomImage(w, h, 1, ImageKind::Mask, 1.0)};
  const double norm = std::sqrt(sx * sx + sy * sy + 1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      in.depth.at(x, y) = z0 + sx * x + sy * y;
      in.normal.at(x, y, 0) = sx / norm;
      in.normal.at(x, y, 1) = sy / norm;
      in.normal.at(x, y, 2) = -1.0 / norm;
    }
  }
  return in;
}

PlaneInputs make_noisy(int w, int h, std::uint64_t seed) {
  PlaneInputs in{GeomImage(w, h, 1, ImageKind::Depth),
                 GeomImage(w, h, 3, ImageKind::Normal),
                 GeomImage(w, h, 1, ImageKind::Mask, 1.0)};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Eigen::Vector3d n(0.4 * u(rng), 0.4 * u(rng), -1.0);
      n.normalize();
      in.depth.at(x, y) = 2.0 + 0.1 * u(rng);
      for (int c = 0; c < 3; ++c) in.normal.at(x, y, c) = n[c];
    }
  }
  return in;
}

double mean_x_slope(const GeomImage& depth) {
  double sum = 0.0;
  long count = 0;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x + 1 < depth.width(); ++x) {
      sum += depth.at(x + 1, y) - depth.at(x, y);
      ++count;
    }
  }
  return sum / count;
}

}  // namespace

TEST_CASE("flat plane integrates to itself") {
  const PlaneInputs in = make_plane(16, 16, 2.0, 0.0, 0.0);
  const BiniResult res = integrate_normals(in.depth, in.normal, in.mask);
  CHECK_FALSE(res.normals_flipped);
  REQUIRE(res.depth.same_shape(in.depth));
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      CHECK(std::abs(res.depth.at(x, y) - 2.0) < 1e-6);
    }
  }
  REQUIRE(!res.objective_trace.empty());
  for (std::size_t i = 1; i < res.objective_trace.size(); ++i) {
    CHECK(res.objective_trace[i] <=
          res.objective_trace[i - 1] * (1.0 + 1e-12) + 1e-18);
  }
}

TEST_CASE("majority positive n_z triggers the flip and identical output") {
  PlaneInputs in = make_plane(12, 12, 3.0, 0.0, 0.0);
  PlaneInputs flipped = in;
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 12; ++x) {
      for (int c = 0; c < 3; ++c) flipped.normal.at(x, y, c) *= -1.0;
    }
  }
  const BiniResult a = integrate_normals(in.depth, in.normal, in.mask);
  const BiniResult b = integrate_normals(flipped.depth, flipped.normal, flipped.mask);
  CHECK_FALSE(a.normals_flipped);
  CHECK(b.normals_flipped);
  CHECK(a.depth.data() == b.depth.data());
}

TEST_CASE("tilted planes recover their slope") {
  for (const auto [sx, sy] : {std::pair{0.3, 0.0}, std::pair{0.0, -0.2},
                              std::pair{0.15, 0.1}}) {
    const PlaneInputs in = make_plane(32, 32, 5.0, sx, sy);
    const BiniResult res = integrate_normals(in.depth, in.normal, in.mask);
    if (sx != 0.0) {
      CHECK(std::abs(mean_x_slope(res.depth) - sx) < 1e-3 * std::abs(sx));
    }
    // A consistent anchor is a fixed point of the whole solve.
    for (int y = 0; y < 32; ++y) {
      for (int x = 0; x < 32; ++x) {
        CHECK(std::abs(res.depth.at(x, y) - in.depth.at(x, y)) < 1e-5);
      }
    }
  }
}

TEST_CASE("constant anchor shift moves the solution by the same constant") {
  const PlaneInputs in = make_noisy(20, 20, 7);
  GeomImage shifted = in.depth;
  for (double& v : shifted.data()) v += 5.0;
  const BiniResult a = integrate_normals(in.depth, in.normal, in.mask);
  const BiniResult b = integrate_normals(shifted, in.normal, in.mask);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 20; ++x) {
      CHECK(std::abs(b.depth.at(x, y) - a.depth.at(x, y) - 5.0) < 1e-8);
    }
  }
}

TEST_CASE("bilateral weighting beats uniform weighting at a step edge") {
  const int w = 32, h = 32;
  GeomImage depth(w, h, 1, ImageKind::Depth);
  GeomImage normal(w, h, 3, ImageKind::Normal);
  GeomImage mask(w, h, 1, ImageKind::Mask, 1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      depth.at(x, y) = x < w / 2 ? 2.0 : 2.5;
      normal.at(x, y, 2) = -1.0;  // flat facets on both sides of the jump
    }
  }
  BiniConfig cfg;
  const BiniResult bilateral = integrate_normals(depth, normal, mask, cfg);
  cfg.bilateral = false;
  const BiniResult uniform = integrate_normals(depth, normal, mask, cfg);
  CHECK(bilateral.objective_trace.back() < uniform.objective_trace.back());
}

TEST_CASE("objective trace is non-increasing on noisy inputs") {
  const PlaneInputs in = make_noisy(24, 24, 42);
  const BiniResult res = integrate_normals(in.depth, in.normal, in.mask);
  REQUIRE(res.objective_trace.size() >= 2);
  for (std::size_t i = 1; i < res.objective_trace.size(); ++i) {
    CHECK(std::isfinite(res.objective_trace[i]));
    CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] * (1.0 + 1e-10));
  }
}

TEST_CASE("masked-out pixels keep their anchor depth") {
  PlaneInputs in = make_noisy(16, 16, 3);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if ((x + y) % 5 == 0) in.mask.at(x, y) = 0.0;
    }
  }
  const BiniResult res = integrate_normals(in.depth, in.normal, in.mask);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (in.mask.at(x, y) == 0.0) {
        CHECK(res.depth.at(x, y) == in.depth.at(x, y));
      }
    }
  }
}

TEST_CASE("integration input validation") {
  const PlaneInputs in = make_plane(8, 8, 2.0, 0.0, 0.0);

  GeomImage empty_mask(8, 8, 1, ImageKind::Mask, 0.0);
  CHECK_THROWS_AS(integrate_normals(in.depth, in.normal, empty_mask),
                  InvalidInputError);

  GeomImage bad_mask = in.mask;
  bad_mask.at(3, 3) = 0.25;
  CHECK_THROWS_AS(integrate_normals(in.depth, in.normal, bad_mask),
                  InvalidInputError);

  GeomImage small(4, 8, 1, ImageKind::Depth, 1.0);
  CHECK_THROWS_AS(integrate_normals(small, in.normal, in.mask), InvalidInputError);

  GeomImage nan_depth = in.depth;
  nan_depth.at(0, 0) = std::nan("");
  CHECK_THROWS_AS(integrate_normals(nan_depth, in.normal, in.mask),
                  InvalidInputError);

  BiniConfig bad;
  bad.irls_iters = 0;
  CHECK_THROWS_AS(integrate_normals(in.depth, in.normal, in.mask, bad),
                  InvalidInputError);
  bad = BiniConfig{};
  bad.cg_tol = 0.0;
  CHECK_THROWS_AS(integrate_normals(in.depth, in.normal, in.mask, bad),
                  InvalidInputError);
  bad = BiniConfig{};
  bad.data_weight = -1.0;
  CHECK_THROWS_AS(integrate_normals(in.depth, in.normal, in.mask, bad),
                  InvalidInputError);
}

TEST_CASE("starved CG reports non-convergence with its residual") {
  const PlaneInputs in = make_noisy(32, 32, 9);
  BiniConfig cfg;
  cfg.cg_max_iters = 1;
  cfg.cg_tol = 1e-14;
  bool threw = false;
  try {
    integrate_normals(in.depth, in.normal, in.mask, cfg);
  } catch (const NumericalError& e) {
    threw = true;
    CHECK(e.residual() > 0.0);
  }
  CHECK(threw);
}

TEST_CASE("backproject_grid lifts masked pixels through the camera") {
  Camera cam;
  cam.fx = 120.0;
  cam.fy = 110.0;
  cam.cx = 8.0;
  cam.cy = 7.5;
  cam.width = 16;
  cam.height = 16;
  cam.rotation = Quaternion{0.9, 0.1, -0.2, 0.3}.normalized();
  cam.translation = Eigen::Vector3d(0.2, -0.1, 0.4);

  GeomImage depth(16, 16, 1, ImageKind::Depth);
  GeomImage mask(16, 16, 1, ImageKind::Mask);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(1.0, 3.0);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if ((x * 31 + y * 17) % 3 == 0) {
        mask.at(x, y) = 1.0;
        depth.at(x, y) = u(rng);
      }
    }
  }
  const GridPointCloud cloud = backproject_grid(depth, mask, cam);
  REQUIRE(cloud.width == 16);
  REQUIRE(cloud.height == 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      REQUIRE(cloud.cell_valid(x, y) == (mask.at(x, y) == 1.0));
      if (!cloud.cell_valid(x, y)) continue;
      const PixelCoord px = project(cam, cloud.at(x, y));
      CHECK(std::abs(px.u - (x + 0.5)) < 1e-6);
      CHECK(std::abs(px.v - (y + 0.5)) < 1e-6);
      CHECK(px.depth == doctest::Approx(depth.at(x, y)).epsilon(1e-12));
    }
  }

  depth.at(5, 0) = 0.0;
  mask.at(5, 0) = 1.0;
  CHECK_THROWS_AS(backproject_grid(depth, mask, cam), InvalidInputError);
}

TEST_CASE("normals_to_pixel_slopes rescales slopes by depth over focal") {
  Camera cam;
  cam.fx = 100.0;
  cam.fy = 50.0;
  cam.cx = cam.cy = 4.0;
  cam.width = cam.height = 8;

  GeomImage depth(8, 8, 1, ImageKind::Depth, 2.0);
  GeomImage mask(8, 8, 1, ImageKind::Mask, 1.0);
  mask.at(0, 0) = 0.0;
  GeomImage normal(8, 8, 3, ImageKind::Normal);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      Eigen::Vector3d n(u(rng), u(rng), -1.0);
      n.normalize();
      for (int c = 0; c < 3; ++c) normal.at(x, y, c) = n[c];
    }
  }

  const GeomImage scaled = normals_to_pixel_slopes(normal, depth, mask, cam);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      if (mask.at(x, y) == 0.0) {
        for (int c = 0; c < 3; ++c) CHECK(scaled.at(x, y, c) == normal.at(x, y, c));
        continue;
      }
      // The slope -n_x/n_z gains a factor of z_med/fx (resp. z_med/fy).
      const double gx = -scaled.at(x, y, 0) / scaled.at(x, y, 2);
      const double gy = -scaled.at(x, y, 1) / scaled.at(x, y, 2);
      const double rx = -normal.at(x, y, 0) / normal.at(x, y, 2) * (2.0 / 100.0);
      const double ry = -normal.at(x, y, 1) / normal.at(x, y, 2) * (2.0 / 50.0);
      CHECK(gx == doctest::Approx(rx).epsilon(1e-12));
      CHECK(gy == doctest::Approx(ry).epsilon(1e-12));
      const double len = std::hypot(scaled.at(x, y, 0),
                                    std::hypot(scaled.at(x, y, 1), scaled.at(x, y, 2)));
      CHECK(len == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("reconstruct composes integration and lifting") {
  const PlaneInputs in = make_plane(16, 16, 2.0, 0.0, 0.0);
  Camera cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = cam.cy = 8.0;
  cam.width = cam.height = 16;
  const GridPointCloud cloud = reconstruct(in.depth, in.normal, in.mask, cam);
  REQUIRE(cloud.valid_count() == 256);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      CHECK(std::abs(cloud.at(x, y).z() - 2.0) < 1e-6);
      const Eigen::Vector3d expected = unproject(cam, x + 0.5, y + 0.5, 2.0);
      CHECK((cloud.at(x, y) - expected).norm() < 1e-6);
    }
  }
}
