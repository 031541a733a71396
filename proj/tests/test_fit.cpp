// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "splathead/decoders.hpp"
#include "splathead/errors.hpp"
#include "splathead/fit.hpp"
#include "splathead/gaussians.hpp"
#include "splathead/losses.hpp"
#include "splathead/renderer.hpp"
#include "splathead/symmetry.hpp"

using namespace splathead;

namespace {

Camera frontal_camera(int size, double f, double dist = 2.0) {
  Camera cam;
  cam.fx = cam.fy = f;
  cam.cx = cam.cy = size / 2.0;
  cam.width = cam.height = size;
  cam.translation = Eigen::Vector3d(0.0, 0.0, dist);
  return cam;
}

GeomImage random_image(std::mt19937_64& rng, int w, int h, int ch) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GeomImage img(w, h, ch, ImageKind::Color);
  for (double& v : img.data()) v = u(rng);
  return img;
}

// Mean SSIM computed against a literal 2D truncated Gaussian window that is
// renormalized per pixel, the definition the library is expected to realize.
double ssim_brute_force(const GeomImage& a, const GeomImage& b, int window,
                        double sigma) {
  const int w = a.width(), h = a.height(), channels = a.channels();
  const int r = window / 2;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  for (int ch = 0; ch < channels; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double norm = 0.0, mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            const int px = x + dx, py = y + dy;
            if (px < 0 || px >= w || py < 0 || py >= h) continue;
            const double wgt =
                std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma));
            const double va = a.at(px, py, ch);
            const double vb = b.at(px, py, ch);
            norm += wgt;
            mx += wgt * va;
            my += wgt * vb;
            mxx += wgt * va * va;
            myy += wgt * vb * vb;
            mxy += wgt * va * vb;
          }
        }
        mx /= norm;
        my /= norm;
        const double vx = mxx / norm - mx * mx;
        const double vy = myy / norm - my * my;
        const double cxy = mxy / norm - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
                 ((mx * mx + my * my + c1) * (vx + vy + c2));
      }
    }
  }
  return total / (static_cast<double>(w) * h * channels);
}

double max_abs_diff(const GeomImage& a, const GeomImage& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

GaussianCloud single_gaussian(const Eigen::Vector3d& pos, const Quaternion& q,
                              const Eigen::Vector3d& log_scales, double logit,
                              const Eigen::Vector3d& dc) {
  GaussianCloud cloud;
  cloud.resize(1);
  cloud.positions[0] = pos;
  cloud.rotations[0] = q;
  cloud.log_scales[0] = log_scales;
  cloud.opacity_logits[0] = logit;
  cloud.color_coeffs[0] = {};
  cloud.color_coeffs[0][0] = dc.x();
  cloud.color_coeffs[0][1] = dc.y();
  cloud.color_coeffs[0][2] = dc.z();
  return cloud;
}

}  // namespace

TEST_CASE("l1 loss matches a direct restatement") {
  std::mt19937_64 rng(101);
  const GeomImage a = random_image(rng, 9, 7, 3);
  GeomImage b = random_image(rng, 9, 7, 3);

  CHECK(l1_loss(a, a) == 0.0);

  GeomImage shifted = a;
  for (double& v : shifted.data()) v += 0.5;
  CHECK(l1_loss(shifted, a) == doctest::Approx(0.5).epsilon(1e-14));

  double expect = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    expect += std::abs(a.data()[i] - b.data()[i]);
  }
  expect /= static_cast<double>(a.data().size());
  GeomImage grad;
  CHECK(l1_loss(a, b, &grad) == doctest::Approx(expect).epsilon(1e-12));

  const double inv_n = 1.0 / static_cast<double>(a.data().size());
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    const double want = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
    CHECK(grad.data()[i] == want);
  }

  // A tied entry carries zero gradient.
  b.data()[5] = a.data()[5];
  l1_loss(a, b, &grad);
  CHECK(grad.data()[5] == 0.0);

  CHECK_THROWS_AS(l1_loss(a, GeomImage(9, 7, 1, ImageKind::Depth)),
                  InvalidInputError);
  CHECK_THROWS_AS(l1_loss(GeomImage(), GeomImage()), InvalidInputError);
}

TEST_CASE("edge loss ignores constant offsets and matches its restatement") {
  std::mt19937_64 rng(202);
  const GeomImage a = random_image(rng, 8, 6, 3);
  const GeomImage b = random_image(rng, 8, 6, 3);

  CHECK(edge_loss(a, a) == 0.0);

  GeomImage shifted = a;
  for (double& v : shifted.data()) v += 0.37;
  CHECK(edge_loss(shifted, a) < 1e-13);

  const int w = a.width(), h = a.height(), ch = a.channels();
  const double count = static_cast<double>((w - 1) * h * ch + w * (h - 1) * ch);
  double expect = 0.0;
  GeomImage grad_expect(w, h, ch, a.kind());
  auto sign0 = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
  for (int c = 0; c < ch; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x + 1 < w; ++x) {
        const double d = (a.at(x + 1, y, c) - a.at(x, y, c)) -
                         (b.at(x + 1, y, c) - b.at(x, y, c));
        expect += std::abs(d);
        grad_expect.at(x + 1, y, c) += sign0(d) / count;
        grad_expect.at(x, y, c) -= sign0(d) / count;
      }
    }
    for (int y = 0; y + 1 < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double d = (a.at(x, y + 1, c) - a.at(x, y, c)) -
                         (b.at(x, y + 1, c) - b.at(x, y, c));
        expect += std::abs(d);
        grad_expect.at(x, y + 1, c) += sign0(d) / count;
        grad_expect.at(x, y, c) -= sign0(d) / count;
      }
    }
  }
  expect /= count;

  GeomImage grad;
  CHECK(edge_loss(a, b, &grad) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(max_abs_diff(grad, grad_expect) < 1e-15);

  CHECK_THROWS_AS(edge_loss(GeomImage(1, 1, 3, ImageKind::Color),
                            GeomImage(1, 1, 3, ImageKind::Color)),
                  InvalidInputError);
}

TEST_CASE("ssim equals a brute-force truncated-window evaluation") {
  std::mt19937_64 rng(303);
  const GeomImage a3 = random_image(rng, 8, 8, 3);
  const GeomImage b3 = random_image(rng, 8, 8, 3);
  const GeomImage a1 = random_image(rng, 8, 8, 1);
  const GeomImage b1 = random_image(rng, 8, 8, 1);

  CHECK(ssim(a3, a3) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a3, b3) == doctest::Approx(ssim(b3, a3)).epsilon(1e-12));
  CHECK(ssim(a3, b3) < 1.0);

  for (int window : {3, 7, 11}) {
    for (double sigma : {1.5, 2.0}) {
      CAPTURE(window);
      CAPTURE(sigma);
      CHECK(std::abs(ssim(a3, b3, window, sigma) -
                     ssim_brute_force(a3, b3, window, sigma)) < 1e-10);
      CHECK(std::abs(ssim(a1, b1, window, sigma) -
                     ssim_brute_force(a1, b1, window, sigma)) < 1e-10);
    }
  }

  CHECK_THROWS_AS(ssim(a3, b3, 4), InvalidInputError);
  CHECK_THROWS_AS(ssim(a3, b3, 0), InvalidInputError);
  CHECK_THROWS_AS(ssim(a3, b3, 11, 0.0), InvalidInputError);
}

TEST_CASE("ssim gradient agrees with finite differences") {
  std::mt19937_64 rng(404);
  GeomImage a = random_image(rng, 7, 6, 2);
  const GeomImage b = random_image(rng, 7, 6, 2);

  GeomImage grad;
  ssim(a, b, 7, 1.5, &grad);

  const double h = 1e-6;
  for (std::size_t i = 0; i < a.data().size(); i += 5) {
    const double saved = a.data()[i];
    a.data()[i] = saved + h;
    const double up = ssim(a, b, 7, 1.5);
    a.data()[i] = saved - h;
    const double dn = ssim(a, b, 7, 1.5);
    a.data()[i] = saved;
    const double fd = (up - dn) / (2.0 * h);
    CHECK(std::abs(grad.data()[i] - fd) <
          1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("total loss is the weighted sum of its standalone components") {
  std::mt19937_64 rng(505);
  const GeomImage coarse = random_image(rng, 10, 8, 3);
  const GeomImage target = random_image(rng, 10, 8, 3);
  const GeomImage gt = random_image(rng, 10, 8, 3);

  LossConfig cfg;
  CHECK(cfg.lambda_p == 0.01);
  CHECK(cfg.lambda_ssim == 0.2);
  CHECK(cfg.ssim_window % 2 == 1);

  GeomImage grad_coarse, grad_target;
  const TotalLossBreakdown out =
      total_loss(coarse, target, gt, cfg, &grad_coarse, &grad_target);

  GeomImage g_l1c, g_l1t, g_ec, g_et, g_ssim;
  const double l1c = l1_loss(coarse, gt, &g_l1c);
  const double l1t = l1_loss(target, gt, &g_l1t);
  const double ec = edge_loss(coarse, gt, &g_ec);
  const double et = edge_loss(target, gt, &g_et);
  const double ss = ssim(target, gt, cfg.ssim_window, cfg.ssim_sigma, &g_ssim);

  CHECK(std::abs(out.l1_coarse - l1c) < 1e-15);
  CHECK(std::abs(out.l1_target - l1t) < 1e-15);
  CHECK(std::abs(out.edge_coarse - ec) < 1e-15);
  CHECK(std::abs(out.edge_target - et) < 1e-15);
  CHECK(std::abs(out.ssim_term - (1.0 - ss)) < 1e-15);
  CHECK(std::abs(out.total - (l1c + l1t + cfg.lambda_p * (ec + et) +
                              cfg.lambda_ssim * (1.0 - ss))) < 1e-12);
  CHECK(out.total >= 0.0);

  for (std::size_t i = 0; i < grad_coarse.data().size(); ++i) {
    CHECK(std::abs(grad_coarse.data()[i] -
                   (g_l1c.data()[i] + cfg.lambda_p * g_ec.data()[i])) < 1e-15);
    CHECK(std::abs(grad_target.data()[i] -
                   (g_l1t.data()[i] + cfg.lambda_p * g_et.data()[i] -
                    cfg.lambda_ssim * g_ssim.data()[i])) < 1e-15);
  }

  // With both weights off only the two data terms remain.
  LossConfig bare;
  bare.lambda_p = 0.0;
  bare.lambda_ssim = 0.0;
  const TotalLossBreakdown plain = total_loss(coarse, target, gt, bare);
  CHECK(std::abs(plain.total - (l1c + l1t)) < 1e-15);

  // Identical images on both stages drive the total to exactly zero.
  const TotalLossBreakdown zero = total_loss(gt, gt, gt, cfg);
  CHECK(zero.total == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(zero.l1_coarse == 0.0);
  CHECK(zero.l1_target == 0.0);
}

TEST_CASE("psnr has the right scale and degenerate behavior") {
  std::mt19937_64 rng(606);
  const GeomImage a = random_image(rng, 6, 5, 3);

  CHECK(std::isinf(psnr(a, a)));

  GeomImage shifted = a;
  for (double& v : shifted.data()) v += 0.5;
  // MSE 0.25 -> 10 log10(4).
  CHECK(psnr(shifted, a) == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-12));

  const GeomImage b = random_image(rng, 6, 5, 3);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data().size());
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));

  CHECK_THROWS_AS(psnr(a, GeomImage(5, 6, 3, ImageKind::Color)), InvalidInputError);
}

TEST_CASE("fit_cloud leaves a perfectly initialized cloud untouched") {
  // One anisotropic Gaussian whose major axis leans toward the camera: the
  // densification child lands behind the near plane and is culled, so the
  // coarse and densified renders coincide bit for bit. Using that render as
  // ground truth makes the initialization a fixed point of the objective.
  const Camera cam = frontal_camera(48, 60.0, 0.45);

  const Eigen::Vector3d axis = Eigen::Vector3d(0.0, 0.02, -1.0).normalized();
  const Eigen::Quaterniond q =
      Eigen::Quaterniond::FromTwoVectors(Eigen::Vector3d::UnitX(), axis);
  GaussianCloud cloud = single_gaussian(
      Eigen::Vector3d::Zero(), Quaternion{q.w(), q.x(), q.y(), q.z()},
      Eigen::Vector3d(0.0, std::log(0.01), std::log(0.01)), 0.5,
      Eigen::Vector3d(0.4, -0.2, 0.3));

  const GaussianCloud dense = densify(cloud);
  REQUIRE(dense.size() == 2);
  // The child must sit behind the near plane for the construction to hold.
  REQUIRE(dense.positions[1].z() + cam.translation.z() < 0.0);

  const RenderOutput coarse = render(cloud, cam);
  const RenderOutput target = render(dense, cam);
  REQUIRE(coarse.color.data() == target.color.data());
  // The parent itself must be visible or the fixed point is vacuous.
  REQUIRE(psnr(coarse.color, GeomImage(48, 48, 3, ImageKind::Color, 0.0)) < 100.0);

  std::vector<FitTarget> targets;
  targets.push_back({cam, coarse.color});

  const GaussianCloud before = cloud;
  LossConfig cfg;
  cfg.steps = 10;
  const FitResult result = fit_cloud(cloud, targets, cfg);

  REQUIRE(result.trace.size() == 10);
  for (const FitTraceRow& row : result.trace) {
    CHECK(row.total < 1e-12);
    CHECK(row.l1_coarse == 0.0);
    CHECK(row.l1_target == 0.0);
  }
  CHECK(std::isinf(result.initial_psnr));
  CHECK(std::isinf(result.final_psnr));

  for (int k = 0; k < 12; ++k) {
    CHECK(std::abs(cloud.color_coeffs[0][k] - before.color_coeffs[0][k]) < 1e-6);
  }
  CHECK(std::abs(cloud.opacity_logits[0] - before.opacity_logits[0]) < 1e-6);
  // Geometry is never part of the optimization.
  CHECK(cloud.positions[0] == before.positions[0]);
  CHECK(cloud.log_scales[0] == before.log_scales[0]);
}

TEST_CASE("fit_cloud recovers a flat target color with one Gaussian") {
  // A splat so large that its opacity is capped on every pixel renders a
  // constant color, so a flat ground truth is attainable up to the cap.
  const Camera cam = frontal_camera(32, 40.0);
  GaussianCloud cloud = single_gaussian(
      Eigen::Vector3d::Zero(), Quaternion{1.0, 0.0, 0.0, 0.0},
      Eigen::Vector3d::Constant(std::log(100.0)), 14.0, Eigen::Vector3d::Zero());

  const Eigen::Vector3d want(0.6, 0.35, 0.5);
  GeomImage gt(32, 32, 3, ImageKind::Color);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      for (int c = 0; c < 3; ++c) gt.at(x, y, c) = want[c];
    }
  }

  std::vector<FitTarget> targets;
  targets.push_back({cam, gt});

  LossConfig cfg;
  cfg.steps = 200;
  cfg.lr = 1.0;
  cfg.lr_decay = 0.97;
  const FitResult result = fit_cloud(cloud, targets, cfg);

  const RenderOutput out = render(cloud, cam);
  CHECK(max_abs_diff(out.color, gt) < 1e-3);
  CHECK(result.final_psnr > result.initial_psnr);
  CHECK(result.final_psnr > 40.0);

  // Trace rows carry consistent components and drop overall.
  REQUIRE(result.trace.size() == 200);
  for (std::size_t i = 0; i < result.trace.size(); ++i) {
    const FitTraceRow& row = result.trace[i];
    CHECK(row.step == static_cast<int>(i));
    CHECK(std::abs(row.total - (row.l1_coarse + row.l1_target +
                                cfg.lambda_p * row.edge +
                                cfg.lambda_ssim * row.ssim_term)) < 1e-12);
  }
  CHECK(result.trace.back().total < 0.05 * result.trace.front().total);
}

TEST_CASE("fit_cloud validates its inputs") {
  GaussianCloud cloud = single_gaussian(
      Eigen::Vector3d::Zero(), Quaternion{1.0, 0.0, 0.0, 0.0},
      Eigen::Vector3d::Constant(std::log(0.1)), 0.0, Eigen::Vector3d::Zero());
  const Camera cam = frontal_camera(16, 20.0);
  const GeomImage good(16, 16, 3, ImageKind::Color, 0.5);

  CHECK_THROWS_AS(fit_cloud(cloud, {}), InvalidInputError);

  std::vector<FitTarget> gray1{{cam, GeomImage(16, 16, 1, ImageKind::Depth, 0.5)}};
  CHECK_THROWS_AS(fit_cloud(cloud, gray1), InvalidInputError);

  std::vector<FitTarget> mismatched{{cam, GeomImage(8, 16, 3, ImageKind::Color, 0.5)}};
  CHECK_THROWS_AS(fit_cloud(cloud, mismatched), InvalidInputError);

  GaussianCloud empty;
  std::vector<FitTarget> ok{{cam, good}};
  CHECK_THROWS_AS(fit_cloud(empty, ok), InvalidInputError);
}

TEST_CASE("fit_pipeline trains only the color and opacity heads") {
  // Small grid of points lifted around the origin plus its mirror.
  PipelineInputs inputs;
  inputs.points = GridPointCloud(4, 3);
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      if (x == 1 && y == 2) continue;  // one hole keeps the layout honest
      inputs.points.at(x, y) =
          Eigen::Vector3d(0.15 + 0.1 * x, 0.1 * y - 0.15, 0.05 * u(rng));
      inputs.points.valid[static_cast<std::size_t>(y) * 4 + x] = 1;
    }
  }
  inputs.mirrored_points = mirror_x(inputs.points);

  GeomImage color(4, 3, 3, ImageKind::Color);
  for (double& v : color.data()) v = u(rng);
  inputs.features = identity_features(color);

  RegressorBundle bundle = RegressorBundle::create(kFeatureDim, 4, 6, 99);
  const RegressorBundle before = bundle;

  const Camera cam = frontal_camera(24, 30.0);
  std::vector<FitTarget> targets;
  targets.push_back({cam, GeomImage(24, 24, 3, ImageKind::Color, 0.5)});

  LossConfig cfg;
  cfg.steps = 3;
  cfg.lr = 0.05;
  const FitResult result = fit_pipeline(inputs, bundle, targets, cfg);

  REQUIRE(result.trace.size() == 3);
  for (const FitTraceRow& row : result.trace) CHECK(std::isfinite(row.total));
  CHECK(std::isfinite(result.initial_psnr));
  CHECK(std::isfinite(result.final_psnr));

  // Color/opacity heads moved, geometry heads stayed bit-identical.
  CHECK(bundle.decode.parameters() != before.decode.parameters());
  CHECK(bundle.sym_color.parameters() != before.sym_color.parameters());
  CHECK(bundle.sym_opacity.parameters() != before.sym_opacity.parameters());
  CHECK(bundle.refine.parameters() == before.refine.parameters());
  CHECK(bundle.deform.parameters() == before.deform.parameters());
  CHECK(bundle.sym_scale.parameters() == before.sym_scale.parameters());
  CHECK(bundle.sym_rot.parameters() == before.sym_rot.parameters());

  // Rerunning from the same starting point reproduces everything exactly.
  RegressorBundle again = before;
  const FitResult rerun = fit_pipeline(inputs, again, targets, cfg);
  CHECK(again.decode.parameters() == bundle.decode.parameters());
  CHECK(again.sym_color.parameters() == bundle.sym_color.parameters());
  CHECK(again.sym_opacity.parameters() == bundle.sym_opacity.parameters());
  for (std::size_t i = 0; i < result.trace.size(); ++i) {
    CHECK(rerun.trace[i].total == result.trace[i].total);
  }
  CHECK(rerun.final_psnr == result.final_psnr);
}

TEST_CASE("trace CSV writes the documented header and full precision") {
  std::vector<FitTraceRow> trace(2);
  trace[0].step = 0;
  trace[0].total = 1.0 / 3.0;
  trace[0].l1_coarse = 0.25;
  trace[0].l1_target = 0.125;
  trace[0].edge = 0.0625;
  trace[0].ssim_term = 1e-17;
  trace[1].step = 1;
  trace[1].total = 2.0 / 7.0;

  const std::string path = "test_trace_tmp.csv";
  write_trace_csv(path, trace);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,total,l1_coarse,l1_target,edge,ssim_term");

  std::string line;
  std::getline(in, line);
  std::replace(line.begin(), line.end(), ',', ' ');
  std::istringstream row(line);
  int step = -1;
  double total = 0.0, l1c = 0.0, l1t = 0.0, edge = 0.0, ssim_term = 0.0;
  row >> step >> total >> l1c >> l1t >> edge >> ssim_term;
  CHECK(step == 0);
  CHECK(total == 1.0 / 3.0);  // 17 significant digits round-trip doubles
  CHECK(l1c == 0.25);
  CHECK(l1t == 0.125);
  CHECK(edge == 0.0625);
  CHECK(ssim_term == 1e-17);

  std::getline(in, line);
  std::replace(line.begin(), line.end(), ',', ' ');
  std::istringstream row2(line);
  row2 >> step >> total;
  CHECK(step == 1);
  CHECK(total == 2.0 / 7.0);
  in.close();
  std::remove(path.c_str());

  CHECK_THROWS_AS(write_trace_csv("/nonexistent_dir_xyz/trace.csv", trace),
                  IoError);
}
