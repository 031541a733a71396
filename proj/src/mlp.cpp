// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#include "splathead/mlp.hpp"

#include <cmath>
#include <random>

#include "splathead/errors.hpp"

namespace splathead {

namespace {

// Uniform double in [0, 1) from the raw engine output. Spelled out instead
// of uniform_real_distribution so initialization is identical across
// standard library implementations.
inline double unit_double(std::mt19937_64& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

}  // namespace

Mlp::Mlp(std::vector<int> widths, std::uint64_t seed)
    : widths_(std::move(widths)), seed_(seed) {
  if (widths_.size() < 2) {
    throw InvalidInputError("Mlp: need at least input and output widths");
  }
  std::ptrdiff_t total = 0;
  for (int l = 0; l + 1 < static_cast<int>(widths_.size()); ++l) {
    if (widths_[l] <= 0 || widths_[l + 1] <= 0) {
      throw InvalidInputError("Mlp: widths must be positive");
    }
    w_offset_.push_back(total);
    total += static_cast<std::ptrdiff_t>(widths_[l + 1]) * widths_[l];
    b_offset_.push_back(total);
    total += widths_[l + 1];
  }
  params_.resize(total);
  std::mt19937_64 eng(seed);
  std::ptrdiff_t pos = 0;
  for (int l = 0; l + 1 < static_cast<int>(widths_.size()); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
    const std::ptrdiff_t count =
        static_cast<std::ptrdiff_t>(widths_[l + 1]) * widths_[l] + widths_[l + 1];
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      params_[pos++] = (2.0 * unit_double(eng) - 1.0) * bound;
    }
  }
}

Mlp Mlp::zeros(std::vector<int> widths) {
  Mlp net(std::move(widths), 0);
  net.params_.setZero();
  return net;
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                               Eigen::RowMajor>>
Mlp::weight(int layer) const {
  return {params_.data() + w_offset_[layer], widths_[layer + 1], widths_[layer]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(int layer) const {
  return {params_.data() + b_offset_[layer], widths_[layer + 1]};
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& input) const {
  Trace trace;
  return forward(input, trace);
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& input, Trace& trace) const {
  if (input.size() != input_dim()) {
    throw InvalidInputError("Mlp::forward: input dimension mismatch");
  }
  trace.activations.clear();
  trace.activations.reserve(widths_.size());
  trace.activations.push_back(input);
  const int layers = layer_count();
  for (int l = 0; l < layers; ++l) {
    Eigen::VectorXd z = weight(l) * trace.activations.back() + bias(l);
    if (l + 1 < layers) z = z.array().tanh();
    trace.activations.push_back(std::move(z));
  }
  return trace.activations.back();
}

void Mlp::backward(const Trace& trace, const Eigen::VectorXd& upstream,
                   Eigen::VectorXd& param_grad, Eigen::VectorXd* input_grad) const {
  if (param_grad.size() != params_.size()) {
    throw InvalidInputError("Mlp::backward: param_grad has wrong size");
  }
  Eigen::VectorXd delta = upstream;
  for (int l = layer_count() - 1; l >= 0; --l) {
    const Eigen::VectorXd& a_in = trace.activations[l];
    const int out = widths_[l + 1], in = widths_[l];
    // dW (row-major) and db for this layer.
    double* wg = param_grad.data() + w_offset_[l];
    for (int o = 0; o < out; ++o) {
      const double d = delta[o];
      double* row = wg + static_cast<std::ptrdiff_t>(o) * in;
      for (int i = 0; i < in; ++i) row[i] += d * a_in[i];
      param_grad[b_offset_[l] + o] += d;
    }
    Eigen::VectorXd g = weight(l).transpose() * delta;
    if (l > 0) {
      // tanh'(z) in terms of the cached activation.
      delta = g.cwiseProduct(
          (1.0 - trace.activations[l].array().square()).matrix());
    } else if (input_grad) {
      *input_grad = std::move(g);
    }
  }
}

Eigen::VectorXd mlp_parameter_gradient(
    const Mlp& net, const std::vector<Eigen::VectorXd>& inputs,
    const std::function<double(const std::vector<Eigen::VectorXd>&,
                               std::vector<Eigen::VectorXd>&)>& loss,
    double* loss_value) {
  std::vector<Mlp::Trace> traces(inputs.size());
  std::vector<Eigen::VectorXd> outputs(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    outputs[i] = net.forward(inputs[i], traces[i]);
  }
  std::vector<Eigen::VectorXd> grad_outputs(inputs.size());
  const double value = loss(outputs, grad_outputs);
  if (loss_value) *loss_value = value;
  Eigen::VectorXd param_grad = Eigen::VectorXd::Zero(net.parameters().size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    net.backward(traces[i], grad_outputs[i], param_grad);
  }
  return param_grad;
}

}  // namespace splathead
