// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

// Command line front end: synth | recon | mirror | decode | render | fit |
// eval. Every subcommand takes --config/--seed/--out-dir, validates its
// inputs up front, and exits 2 on invalid input, 3 on numerical failure and
// 4 on I/O errors, printing a one-line JSON diagnostic to stderr.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "splathead/errors.hpp"
#include "splathead/fit.hpp"
#include "splathead/io.hpp"
#include "splathead/renderer.hpp"

namespace fs = std::filesystem;
using namespace splathead;
using ojson = nlohmann::ordered_json;

namespace {

constexpr double kPsnrSentinel = 999.0;  // stands in for +infinity in reports

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--config", c.config_path, "Pipeline config JSON");
  cmd->add_option("--out-dir", c.out_dir, "Output directory, created if missing");
  c.seed_opt = cmd->add_option("--seed", c.seed, "Override every seed in the config");
}

PipelineConfig load_config(const CommonOpts& c) {
  PipelineConfig cfg =
      c.config_path.empty() ? PipelineConfig{} : read_config_json(c.config_path);
  if (c.seed_opt != nullptr && c.seed_opt->count() > 0) {
    cfg.seed = c.seed;
    cfg.loss.seed = c.seed;
    cfg.synth.seed = c.seed;
  }
  return cfg;
}

std::string prepare_out_dir(const CommonOpts& c) {
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (ec) throw IoError(c.out_dir + ": cannot create output directory: " + ec.message());
  return c.out_dir;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(path + ": write failed");
}

GeomImage read_any_image(const std::string& path) {
  return path.ends_with(".png") ? read_png(path) : read_pfm(path);
}

GeomImage read_color_input(const std::string& path) {
  return path.ends_with(".png") ? read_png(path) : read_pfm(path, ImageKind::Color);
}

double psnr_or_sentinel(double v) { return std::isinf(v) ? kPsnrSentinel : v; }

std::vector<double> parse_yaw_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &pos);
    } catch (const std::exception&) {
      throw InvalidInputError("render: bad --yaw value '" + tok + "'");
    }
    while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
    if (pos != tok.size()) throw InvalidInputError("render: bad --yaw value '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw InvalidInputError("render: --yaw list is empty");
  return out;
}

std::string yaw_tag(double yaw) {
  std::ostringstream s;
  s << yaw;
  return s.str();
}

// Contrast-stretches masked depth to [0, 1] for the 8-bit preview.
GeomImage depth_preview(const GeomImage& depth, const GeomImage& mask) {
  GeomImage out(depth.width(), depth.height(), 1, ImageKind::Depth);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (mask.at(x, y) == 0.0) continue;
      lo = std::min(lo, depth.at(x, y));
      hi = std::max(hi, depth.at(x, y));
    }
  }
  if (hi > lo) {
    for (int y = 0; y < depth.height(); ++y) {
      for (int x = 0; x < depth.width(); ++x) {
        if (mask.at(x, y) == 0.0) continue;
        out.at(x, y) = (depth.at(x, y) - lo) / (hi - lo);
      }
    }
  }
  return out;
}

GeomImage normal_preview(const GeomImage& normal) {
  GeomImage out = normal;
  for (double& v : out.data()) v = 0.5 * (v + 1.0);
  return out;
}

struct SynthOpts {
  CommonOpts common;
  double yaw = 0.0;
};

void run_synth(const SynthOpts& o) {
  const PipelineConfig cfg = load_config(o.common);
  const std::string dir = prepare_out_dir(o.common);
  Camera camera = synth_camera(cfg.synth);
  if (o.yaw != 0.0) camera = yaw_camera(camera, o.yaw, Eigen::Vector3d::Zero());
  const SynthView view = synth_scene(cfg.synth, camera);

  write_pfm(join(dir, "color.pfm"), view.color);
  write_png(join(dir, "color.png"), view.color);
  write_pfm(join(dir, "depth.pfm"), view.depth);
  write_png(join(dir, "depth.png"), depth_preview(view.depth, view.mask));
  write_pfm(join(dir, "normal.pfm"), view.normal);
  write_png(join(dir, "normal.png"), normal_preview(view.normal));
  write_pfm(join(dir, "mask.pfm"), view.mask);
  write_png(join(dir, "mask.png"), view.mask);
  write_camera_json(join(dir, "camera.json"), camera);
  std::cout << "synth: wrote " << camera.width << "x" << camera.height
            << " bundle to " << dir << "\n";
}

struct ReconOpts {
  CommonOpts common;
  std::string depth, normal, mask, camera, color, checkpoint;
};

void run_recon(const ReconOpts& o) {
  const PipelineConfig cfg = load_config(o.common);
  const std::string dir = prepare_out_dir(o.common);
  const GeomImage depth = read_pfm(o.depth, ImageKind::Depth);
  const GeomImage normal = read_pfm(o.normal, ImageKind::Normal);
  const GeomImage mask = read_pfm(o.mask, ImageKind::Mask);
  const Camera camera = o.camera.empty() ? cfg.camera : read_camera_json(o.camera);

  const GeomImage slopes = normals_to_pixel_slopes(normal, depth, mask, camera);
  GridPointCloud points = reconstruct(depth, slopes, mask, camera, cfg.bini);
  if (!o.checkpoint.empty()) {
    if (o.color.empty()) {
      throw InvalidInputError("recon: --color is required with --checkpoint");
    }
    const RegressorBundle bundle = read_checkpoint(o.checkpoint);
    points = refine_geometry(points, identity_features(read_color_input(o.color)),
                             bundle.refine);
  }
  write_ply(join(dir, "points.ply"), points);
  std::cout << "recon: wrote " << points.valid_count() << " points to " << dir << "\n";
}

struct MirrorOpts {
  CommonOpts common;
  std::string points;
};

void run_mirror(const MirrorOpts& o) {
  const PipelineConfig cfg = load_config(o.common);
  const std::string dir = prepare_out_dir(o.common);
  const GridPointCloud points = read_grid_ply(o.points);
  const VoxelFilterConfig vf =
      resolve_voxel_config(points, cfg.voxel.voxel_size, cfg.voxel.neighborhood_radius,
                           cfg.voxel.z_margin);
  const SymmetricCompletion sc = symmetric_complete(points, vf);

  write_ply(join(dir, "mirrored.ply"), sc.mirrored);
  ojson report;
  report["survivors"] = sc.mirrored.valid_count();
  report["removed_adjacent"] = sc.report.removed_adjacent;
  report["removed_occluded"] = sc.report.removed_occluded;
  report["empty_original"] = sc.report.empty_original;
  report["voxel_size"] = vf.voxel_size;
  report["neighborhood_radius"] = vf.neighborhood_radius;
  report["z_margin"] = vf.z_margin;
  const std::string text = report.dump(2) + "\n";
  write_text_file(join(dir, "report.json"), text);
  std::cout << text;
}

struct DecodeOpts {
  CommonOpts common;
  std::string points, mirrored, color, checkpoint;
  double scale = 0.0;    // <= 0 means half the median grid spacing
  double opacity = 0.9;  // activated opacity for seeded Gaussians
};

void run_decode(const DecodeOpts& o) {
  const PipelineConfig cfg = load_config(o.common);
  const std::string dir = prepare_out_dir(o.common);
  const GridPointCloud points = read_grid_ply(o.points);
  const GeomImage color = read_color_input(o.color);
  const GeomImage features = identity_features(color);

  GaussianCloud visible;
  RegressorBundle bundle =
      RegressorBundle::zeros(kFeatureDim, cfg.expression_dim, cfg.hidden_width);
  if (!o.checkpoint.empty()) {
    bundle = read_checkpoint(o.checkpoint);
    visible = decode_visible(points, features, bundle.decode);
  } else {
    // Seeded mode: isotropic Gaussians matching the source pixels, with the
    // zero-initialized symmetric decoders acting as a pure mirror prior.
    const double s = o.scale > 0.0 ? o.scale : 0.5 * median_grid_spacing(points);
    visible = seed_gaussians(points, color, s, o.opacity);
  }

  GaussianCloud out = visible;
  std::size_t sym_count = 0;
  if (!o.mirrored.empty()) {
    const GridPointCloud mirrored = read_grid_ply(o.mirrored);
    const SymDecodeResult sym = decode_symmetric(visible, features, mirrored, bundle);
    sym_count = sym.cloud.size();
    out = concat(visible, sym.cloud);
  }
  write_ply(join(dir, "gaussians.ply"), out);
  std::cout << "decode: wrote " << visible.size() << " visible + " << sym_count
            << " symmetric gaussians to " << dir << "\n";
}

struct RenderOpts {
  CommonOpts common;
  std::string gaussians, camera, composite;
  std::string yaw = "0";
};

void run_render(const RenderOpts& o) {
  const PipelineConfig cfg = load_config(o.common);
  const std::string dir = prepare_out_dir(o.common);
  const GaussianCloud cloud = read_gaussian_ply(o.gaussians);
  const Camera base = o.camera.empty() ? cfg.camera : read_camera_json(o.camera);
  const std::vector<double> yaws = parse_yaw_list(o.yaw);

  GeomImage background;
  if (!o.composite.empty()) {
    background = read_color_input(o.composite);
    if (background.width() != base.width || background.height() != base.height) {
      throw InvalidInputError("render: background size does not match the camera");
    }
  }

  for (double yaw : yaws) {
    const Camera camera =
        yaw == 0.0 ? base : yaw_camera(base, yaw, Eigen::Vector3d::Zero());
    const RenderOutput out = render(cloud, camera);
    const std::string tag = yaw_tag(yaw);
    write_pfm(join(dir, "frame_" + tag + ".pfm"), out.color);
    write_png(join(dir, "frame_" + tag + ".png"), out.color);
    write_pfm(join(dir, "frame_" + tag + "_alpha.pfm"), out.alpha);
    if (!o.composite.empty()) {
      // Rendered color is premultiplied, so compositing is C + T * background.
      GeomImage comp = out.color;
      for (int y = 0; y < comp.height(); ++y) {
        for (int x = 0; x < comp.width(); ++x) {
          for (int c = 0; c < 3; ++c) {
            comp.at(x, y, c) += out.transmittance.at(x, y) * background.at(x, y, c);
          }
        }
      }
      write_pfm(join(dir, "composite_" + tag + ".pfm"), comp);
      write_png(join(dir, "composite_" + tag + ".png"), comp);
    }
  }
  std::cout << "render: wrote " << yaws.size() << " frame(s) of " << cloud.size()
            << " gaussians to " << dir << "\n";
}

struct FitOpts {
  CommonOpts common;
  std::string gaussians, points, mirrored, color, checkpoint;
  std::vector<std::string> images, cameras;
  int steps = -1;        // < 0 keeps the config value
  double lr = 0.0;       // <= 0 keeps the config value
  double lr_decay = 0.0; // <= 0 keeps the config value
};

void run_fit(const FitOpts& o) {
  const PipelineConfig cfg = load_config(o.common);
  const std::string dir = prepare_out_dir(o.common);
  if (o.images.empty() || o.images.size() != o.cameras.size()) {
    throw InvalidInputError("fit: provide matching --image/--camera pairs");
  }
  std::vector<FitTarget> targets;
  targets.reserve(o.images.size());
  for (std::size_t i = 0; i < o.images.size(); ++i) {
    targets.push_back({read_camera_json(o.cameras[i]), read_color_input(o.images[i])});
  }
  LossConfig loss_cfg = cfg.loss;
  if (o.steps >= 0) loss_cfg.steps = o.steps;
  if (o.lr > 0.0) loss_cfg.lr = o.lr;
  if (o.lr_decay > 0.0) loss_cfg.lr_decay = o.lr_decay;

  FitResult result;
  if (!o.gaussians.empty()) {
    GaussianCloud cloud = read_gaussian_ply(o.gaussians);
    result = fit_cloud(cloud, targets, loss_cfg);
    write_ply(join(dir, "fit.ply"), cloud);
  } else {
    if (o.points.empty() || o.mirrored.empty() || o.color.empty()) {
      throw InvalidInputError(
          "fit: need --gaussians, or --points/--mirrored/--color for pipeline mode");
    }
    const GridPointCloud points = read_grid_ply(o.points);
    const GridPointCloud mirrored = read_grid_ply(o.mirrored);
    const GeomImage features = identity_features(read_color_input(o.color));
    RegressorBundle bundle =
        o.checkpoint.empty()
            ? RegressorBundle::create(kFeatureDim, cfg.expression_dim,
                                      cfg.hidden_width, cfg.seed)
            : read_checkpoint(o.checkpoint);
    result = fit_pipeline({points, mirrored, features}, bundle, targets, loss_cfg);
    write_checkpoint(join(dir, "checkpoint.bin"), bundle);
    const GaussianCloud visible = decode_visible(points, features, bundle.decode);
    const SymDecodeResult sym = decode_symmetric(visible, features, mirrored, bundle);
    write_ply(join(dir, "fit.ply"), concat(visible, sym.cloud));
  }

  write_trace_csv(join(dir, "trace.csv"), result.trace);
  ojson metrics;
  metrics["initial_psnr"] = psnr_or_sentinel(result.initial_psnr);
  metrics["final_psnr"] = psnr_or_sentinel(result.final_psnr);
  metrics["steps"] = loss_cfg.steps;
  const std::string text = metrics.dump(2) + "\n";
  write_text_file(join(dir, "metrics.json"), text);
  std::cout << text;
}

struct EvalOpts {
  CommonOpts common;
  std::string image_a, image_b;
  bool no_report = false;
};

void run_eval(const EvalOpts& o) {
  const PipelineConfig cfg = load_config(o.common);
  const GeomImage a = read_any_image(o.image_a);
  const GeomImage b = read_any_image(o.image_b);
  ojson report;
  report["psnr"] = psnr_or_sentinel(psnr(a, b));
  report["ssim"] = ssim(a, b, cfg.loss.ssim_window, cfg.loss.ssim_sigma);
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  if (!o.no_report) {
    const std::string dir = prepare_out_dir(o.common);
    write_text_file(join(dir, "eval.json"), text);
  }
}

int fail(int code, const std::string& kind, const std::string& message) {
  ojson j;
  j["error"] = kind;
  j["message"] = message;
  j["exit_code"] = code;
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splathead: single-view symmetric Gaussian head toolkit"};
  app.set_version_flag("--version", "splathead 0.1.0");
  app.require_subcommand(1);

  SynthOpts synth_o;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Render a synthetic head bundle");
  add_common(synth_cmd, synth_o.common);
  synth_cmd->add_option("--yaw", synth_o.yaw, "Camera yaw (degrees) about the head");

  ReconOpts recon_o;
  CLI::App* recon_cmd =
      app.add_subcommand("recon", "Integrate normals and lift depth to a point grid");
  add_common(recon_cmd, recon_o.common);
  recon_cmd->add_option("--depth", recon_o.depth, "Depth PFM")
      ->required();
  recon_cmd->add_option("--normal", recon_o.normal, "Normal PFM")
      ->required();
  recon_cmd->add_option("--mask", recon_o.mask, "Mask PFM")
      ->required();
  recon_cmd->add_option("--camera", recon_o.camera, "Camera JSON");
  recon_cmd->add_option("--color", recon_o.color, "Color image for refinement features");
  recon_cmd->add_option("--checkpoint", recon_o.checkpoint, "Regressor checkpoint");

  MirrorOpts mirror_o;
  CLI::App* mirror_cmd =
      app.add_subcommand("mirror", "Mirror a point grid and filter duplicates");
  add_common(mirror_cmd, mirror_o.common);
  mirror_cmd->add_option("--points", mirror_o.points, "Point grid PLY")
      ->required();

  DecodeOpts decode_o;
  CLI::App* decode_cmd =
      app.add_subcommand("decode", "Decode point grids into a Gaussian cloud");
  add_common(decode_cmd, decode_o.common);
  decode_cmd->add_option("--points", decode_o.points, "Visible point grid PLY")
      ->required();
  decode_cmd->add_option("--mirrored", decode_o.mirrored, "Mirrored point grid PLY");
  decode_cmd->add_option("--color", decode_o.color, "Source color image")
      ->required();
  decode_cmd->add_option("--checkpoint", decode_o.checkpoint, "Regressor checkpoint");
  decode_cmd->add_option("--scale", decode_o.scale,
                         "Seeded-mode Gaussian scale (default: half grid spacing)");
  decode_cmd->add_option("--opacity", decode_o.opacity, "Seeded-mode opacity");

  RenderOpts render_o;
  CLI::App* render_cmd = app.add_subcommand("render", "Rasterize a Gaussian cloud");
  add_common(render_cmd, render_o.common);
  render_cmd->add_option("--gaussians", render_o.gaussians, "Gaussian cloud PLY")
      ->required();
  render_cmd->add_option("--camera", render_o.camera, "Camera JSON");
  render_cmd->add_option("--yaw", render_o.yaw,
                         "Comma-separated yaw list in degrees, e.g. -30,0,30");
  render_cmd->add_option("--composite", render_o.composite,
                         "Background image to alpha-over");

  FitOpts fit_o;
  CLI::App* fit_cmd = app.add_subcommand("fit", "Fit parameters to target views");
  add_common(fit_cmd, fit_o.common);
  fit_cmd->add_option("--gaussians", fit_o.gaussians, "Initial Gaussian cloud PLY");
  fit_cmd->add_option("--points", fit_o.points, "Visible point grid PLY (pipeline mode)")
      ->excludes("--gaussians");
  fit_cmd->add_option("--mirrored", fit_o.mirrored, "Mirrored point grid PLY");
  fit_cmd->add_option("--color", fit_o.color, "Source color image (pipeline mode)");
  fit_cmd->add_option("--checkpoint", fit_o.checkpoint, "Initial regressor checkpoint");
  fit_cmd->add_option("--image", fit_o.images, "Target view image (repeatable)");
  fit_cmd->add_option("--camera", fit_o.cameras, "Target view camera JSON (repeatable)");
  fit_cmd->add_option("--steps", fit_o.steps, "SGD steps (overrides config)");
  fit_cmd->add_option("--lr", fit_o.lr, "Learning rate (overrides config)");
  fit_cmd->add_option("--lr-decay", fit_o.lr_decay,
                      "Per-step learning rate decay (overrides config)");

  EvalOpts eval_o;
  CLI::App* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM between two images");
  add_common(eval_cmd, eval_o.common);
  eval_cmd->add_option("image_a", eval_o.image_a, "First image")
      ->required();
  eval_cmd->add_option("image_b", eval_o.image_b, "Second image")
      ->required();
  eval_cmd->add_flag("--no-report", eval_o.no_report, "Skip writing eval.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version exit 0, usage errors exit 2
  }

  try {
    if (synth_cmd->parsed()) run_synth(synth_o);
    else if (recon_cmd->parsed()) run_recon(recon_o);
    else if (mirror_cmd->parsed()) run_mirror(mirror_o);
    else if (decode_cmd->parsed()) run_decode(decode_o);
    else if (render_cmd->parsed()) run_render(render_o);
    else if (fit_cmd->parsed()) run_fit(fit_o);
    else if (eval_cmd->parsed()) run_eval(eval_o);
    return 0;
  } catch (const NumericalError& e) {
    return fail(3, "numerical", e.what());
  } catch (const InvalidInputError& e) {
    return fail(2, "invalid_input", e.what());
  } catch (const IoError& e) {
    return fail(4, "io", e.what());
  } catch (const std::exception& e) {
    return fail(1, "internal", e.what());
  }
}
