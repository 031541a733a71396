// Copyright Contributors to the SplatHead Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

namespace splathead {

// Small dense multilayer perceptron: tanh on hidden layers, linear output.
// Parameters live in one flat vector (per layer: row-major (out x in)
// weights, then biases) so optimizers and checkpoints can treat the net as a
// single array. Randomly initialized weights and biases are uniform in
// +-1/sqrt(fan_in), drawn from a seeded generator with a fixed layout, so
// construction is bit-reproducible.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> widths, std::uint64_t seed);

  // All parameters zero. Residual decoders built this way are identities.
  static Mlp zeros(std::vector<int> widths);

  const std::vector<int>& widths() const { return widths_; }
  std::uint64_t seed() const { return seed_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int layer_count() const { return static_cast<int>(widths_.size()) - 1; }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;

  // Cached activations for one forward pass; activations[0] is the input and
  // activations[l + 1] the output of layer l.
  struct Trace {
    std::vector<Eigen::VectorXd> activations;
  };
  Eigen::VectorXd forward(const Eigen::VectorXd& input, Trace& trace) const;

  // Reverse-mode accumulation: adds dL/dparams into param_grad (sized like
  // parameters()) given upstream = dL/doutput for the traced pass. When
  // input_grad is non-null it receives dL/dinput (overwritten, not added).
  void backward(const Trace& trace, const Eigen::VectorXd& upstream,
                Eigen::VectorXd& param_grad,
                Eigen::VectorXd* input_grad = nullptr) const;

 private:
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
  weight(int layer) const;
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  std::vector<int> widths_;
  std::uint64_t seed_ = 0;
  Eigen::VectorXd params_;
  std::vector<std::ptrdiff_t> w_offset_, b_offset_;
};

// dL/dparams for a loss over the net's outputs on a batch of inputs. The
// loss callback receives all outputs, fills grad_outputs (dL/doutput per
// input) and returns the loss value, which is stored in *loss_value when
// requested.
Eigen::VectorXd mlp_parameter_gradient(
    const Mlp& net, const std::vector<Eigen::VectorXd>& inputs,
    const std::function<double(const std::vector<Eigen::VectorXd>& outputs,
                               std::vector<Eigen::VectorXd>& grad_outputs)>& loss,
    double* loss_value = nullptr);

}  // namespace splathead
