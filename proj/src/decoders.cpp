// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/decoders.hpp"

#include <cmath>
#include <unordered_map>

#include "splathead/errors.hpp"

namespace splathead {

GeomImage identity_features(const GeomImage& color) {
  if (color.channels() != 3) {
    throw InvalidInputError("identity_features: expected a 3-channel color raster");
  }
  const int w = color.width(), h = color.height();
  GeomImage out(w, h, kFeatureDim, ImageKind::Feature);
  const auto mean = [&](int x, int y) {
    return (color.at(x, y, 0) + color.at(x, y, 1) + color.at(x, y, 2)) / 3.0;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
      const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
      const double gx = (mean(xr, y) - mean(xl, y)) / (xr - xl > 0 ? xr - xl : 1);
      const double gy = (mean(x, yd) - mean(x, yu)) / (yd - yu > 0 ? yd - yu : 1);
      out.at(x, y, 0) = color.at(x, y, 0);
      out.at(x, y, 1) = color.at(x, y, 1);
      out.at(x, y, 2) = color.at(x, y, 2);
      out.at(x, y, 3) = gx;
      out.at(x, y, 4) = gy;
      out.at(x, y, 5) = std::sqrt(gx * gx + gy * gy);
      out.at(x, y, 6) = (x + 0.5) / w;
      out.at(x, y, 7) = (y + 0.5) / h;
    }
  }
  return out;
}

RegressorBundle RegressorBundle::create(int feature_dim, int expression_dim,
                                        int hidden, std::uint64_t seed) {
  RegressorBundle b;
  b.feature_dim = feature_dim;
  b.expression_dim = expression_dim;
  b.refine = Mlp({3 + feature_dim, hidden, 3}, seed + 1);
  b.deform = Mlp({3 + 2 * expression_dim, hidden, 3}, seed + 2);
  b.decode = Mlp({3 + feature_dim, hidden, 20}, seed + 3);
  b.sym_scale = Mlp({3 + feature_dim + 3, hidden, 3}, seed + 4);
  b.sym_rot = Mlp({3 + feature_dim + 4, hidden, 4}, seed + 5);
  b.sym_color = Mlp({3 + feature_dim + 12, hidden, 12}, seed + 6);
  b.sym_opacity = Mlp({3 + feature_dim + 1, hidden, 1}, seed + 7);
  return b;
}

RegressorBundle RegressorBundle::zeros(int feature_dim, int expression_dim,
                                       int hidden) {
  RegressorBundle b = create(feature_dim, expression_dim, hidden, 0);
  b.refine.parameters().setZero();
  b.deform.parameters().setZero();
  b.decode.parameters().setZero();
  b.sym_scale.parameters().setZero();
  b.sym_rot.parameters().setZero();
  b.sym_color.parameters().setZero();
  b.sym_opacity.parameters().setZero();
  return b;
}

namespace {

Eigen::VectorXd feature_at(const GeomImage& features, int x, int y) {
  Eigen::VectorXd f(features.channels());
  for (int c = 0; c < features.channels(); ++c) f[c] = features.at(x, y, c);
  return f;
}

void check_feature_grid(const GridPointCloud& cloud, const GeomImage& features) {
  if (features.width() != cloud.width || features.height() != cloud.height) {
    throw InvalidInputError("decoders: feature raster does not match the grid");
  }
}

}  // namespace

GridPointCloud refine_geometry(const GridPointCloud& cloud, const GeomImage& features,
                               const Mlp& refine) {
  check_feature_grid(cloud, features);
  if (refine.input_dim() != 3 + features.channels() || refine.output_dim() != 3) {
    throw InvalidInputError("refine_geometry: net shape mismatch");
  }
  GridPointCloud out = cloud;
  Eigen::VectorXd input(refine.input_dim());
  for (int y = 0; y < cloud.height; ++y) {
    for (int x = 0; x < cloud.width; ++x) {
      if (!cloud.cell_valid(x, y)) continue;
      input.head<3>() = cloud.at(x, y);
      input.tail(features.channels()) = feature_at(features, x, y);
      out.at(x, y) += refine.forward(input).head<3>();
    }
  }
  return out;
}

GridPointCloud deform_cloud(const GridPointCloud& cloud, const ExpressionCoeffs& beta_d,
                            const ExpressionCoeffs& beta_s, const Mlp& deform) {
  const int d = beta_d.dim();
  if (beta_s.dim() != d) {
    throw InvalidInputError("deform_cloud: expression dims disagree");
  }
  if (deform.input_dim() != 3 + 2 * d || deform.output_dim() != 3) {
    throw InvalidInputError("deform_cloud: net shape mismatch");
  }
  GridPointCloud out = cloud;
  Eigen::VectorXd input(deform.input_dim());
  input.segment(3, d) = beta_d.values;
  input.tail(d) = beta_s.values;
  for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
    if (!cloud.valid[i]) continue;
    input.head<3>() = cloud.positions[i];
    out.positions[i] += deform.forward(input).head<3>();
  }
  return out;
}

GaussianCloud decode_visible(const GridPointCloud& points, const GeomImage& features,
                             const Mlp& decode, DecodeTraces* traces) {
  check_feature_grid(points, features);
  if (decode.input_dim() != 3 + features.channels() || decode.output_dim() != 20) {
    throw InvalidInputError("decode_visible: net shape mismatch");
  }
  if (points.valid_count() == 0) {
    throw InvalidInputError("decode_visible: empty point cloud");
  }
  GaussianCloud out;
  out.reserve(points.valid_count());
  if (traces) traces->per_point.clear();
  Eigen::VectorXd input(decode.input_dim());
  for (int y = 0; y < points.height; ++y) {
    for (int x = 0; x < points.width; ++x) {
      if (!points.cell_valid(x, y)) continue;
      input.head<3>() = points.at(x, y);
      input.tail(features.channels()) = feature_at(features, x, y);
      Mlp::Trace trace;
      const Eigen::VectorXd raw = decode.forward(input, trace);
      if (traces) traces->per_point.push_back(std::move(trace));

      out.positions.push_back(points.at(x, y));
      out.log_scales.push_back(raw.head<3>());
      // +1 w bias so the zero net yields the identity rotation.
      out.rotations.push_back(
          Quaternion{raw[3] + 1.0, raw[4], raw[5], raw[6]}.normalized());
      out.opacity_logits.push_back(raw[7]);
      std::array<double, 12> color;
      for (int i = 0; i < 12; ++i) color[i] = raw[8 + i];
      out.color_coeffs.push_back(color);
      out.provenance.push_back(Provenance::Visible);
      out.grid_index.push_back(y * points.width + x);
    }
  }
  return out;
}

SymDecodeResult decode_symmetric(const GaussianCloud& visible, const GeomImage& features,
                                 const GridPointCloud& mirrored,
                                 const RegressorBundle& nets,
                                 SymDecodeTraces* traces) {
  check_feature_grid(mirrored, features);
  const int f = features.channels();
  if (nets.sym_scale.input_dim() != 3 + f + 3 || nets.sym_rot.input_dim() != 3 + f + 4 ||
      nets.sym_color.input_dim() != 3 + f + 12 ||
      nets.sym_opacity.input_dim() != 3 + f + 1) {
    throw InvalidInputError("decode_symmetric: net shape mismatch");
  }

  std::unordered_map<std::int32_t, std::int32_t> row_of_cell;
  row_of_cell.reserve(visible.size());
  for (std::size_t r = 0; r < visible.size(); ++r) {
    if (visible.grid_index[r] >= 0) {
      row_of_cell.emplace(visible.grid_index[r], static_cast<std::int32_t>(r));
    }
  }

  SymDecodeResult result;
  result.cloud.reserve(mirrored.valid_count());
  if (traces) *traces = SymDecodeTraces{};

  const auto run = [](const Mlp& net, const Eigen::Vector3d& pos,
                      const Eigen::VectorXd& feat, const Eigen::VectorXd& anchor,
                      Mlp::Trace* trace_out) {
    Eigen::VectorXd input(3 + feat.size() + anchor.size());
    input.head<3>() = pos;
    input.segment(3, feat.size()) = feat;
    input.tail(anchor.size()) = anchor;
    Mlp::Trace trace;
    Eigen::VectorXd delta = net.forward(input, trace);
    if (trace_out) *trace_out = std::move(trace);
    return delta;
  };

  for (int y = 0; y < mirrored.height; ++y) {
    for (int x = 0; x < mirrored.width; ++x) {
      if (!mirrored.cell_valid(x, y)) continue;
      const std::int32_t cell = y * mirrored.width + x;
      const auto it = row_of_cell.find(cell);
      if (it == row_of_cell.end()) {
        ++result.skipped_missing_anchor;
        continue;
      }
      const std::int32_t a = it->second;
      const Eigen::Vector3d pos = mirrored.at(x, y);
      const Eigen::VectorXd feat = feature_at(features, x, y);

      Mlp::Trace ts, tr, tc, to;
      const Eigen::VectorXd ds = run(nets.sym_scale, pos, feat,
                                     visible.log_scales[a], traces ? &ts : nullptr);
      const Eigen::VectorXd dr = run(nets.sym_rot, pos, feat,
                                     visible.rotations[a].as_vec4(),
                                     traces ? &tr : nullptr);
      Eigen::VectorXd anchor_color(12);
      for (int i = 0; i < 12; ++i) anchor_color[i] = visible.color_coeffs[a][i];
      const Eigen::VectorXd dc =
          run(nets.sym_color, pos, feat, anchor_color, traces ? &tc : nullptr);
      Eigen::VectorXd anchor_op(1);
      anchor_op[0] = visible.opacity_logits[a];
      const Eigen::VectorXd dop =
          run(nets.sym_opacity, pos, feat, anchor_op, traces ? &to : nullptr);

      result.cloud.positions.push_back(pos);
      result.cloud.log_scales.push_back(visible.log_scales[a] + ds.head<3>());
      result.cloud.rotations.push_back(
          Quaternion::from_vec4(visible.rotations[a].as_vec4() + dr.head<4>()));
      result.cloud.opacity_logits.push_back(visible.opacity_logits[a] + dop[0]);
      std::array<double, 12> color;
      for (int i = 0; i < 12; ++i) color[i] = anchor_color[i] + dc[i];
      result.cloud.color_coeffs.push_back(color);
      result.cloud.provenance.push_back(Provenance::Symmetric);
      result.cloud.grid_index.push_back(cell);

      if (traces) {
        traces->scale.push_back(std::move(ts));
        traces->rot.push_back(std::move(tr));
        traces->color.push_back(std::move(tc));
        traces->opacity.push_back(std::move(to));
        traces->anchor_rows.push_back(a);
      }
    }
  }
  return result;
}

}  // namespace splathead
