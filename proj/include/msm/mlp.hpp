// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "msm/numerics.hpp"

namespace msm {

/// Fully connected network with SiLU hidden activations and a linear output.
/// Parameters live in one flat vector (per layer: weights row-major
/// [out, in], then biases).
class Mlp {
 public:
  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
    std::uint64_t version = 0;
  };

  Mlp() = default;
  /// widths = {input, hidden..., output}. Weights use a scaled Gaussian init;
  /// the output layer starts at zero.
  Mlp(std::vector<std::size_t> widths, Rng& rng);
  /// All-zero parameters.
  explicit Mlp(std::vector<std::size_t> widths);

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t input_size() const { return widths_.front(); }
  std::size_t output_size() const { return widths_.back(); }
  std::size_t parameter_count() const noexcept { return params_.size(); }

  std::span<const double> parameters() const noexcept { return params_; }
  /// Replaces all parameters and bumps the version counter.
  void set_parameters(std::span<const double> values);
  /// Mutable access for optimizers; call touch() after editing.
  std::vector<double>& mutable_parameters() noexcept { return params_; }
  void touch() noexcept { ++version_; }
  std::uint64_t version() const noexcept { return version_; }

  /// Columns of X are samples. When `tape` is given it records what backward
  /// needs.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape* tape = nullptr) const;
  /// Accumulates dLoss/dθ into `grad` given dLoss/dY. Throws
  /// ContractViolation if parameters changed since the taped forward pass.
  void backward(const Tape& tape, const Eigen::MatrixXd& d_out, std::span<double> grad) const;

 private:
  std::size_t layer_offset(std::size_t layer) const { return offsets_[layer]; }

  std::vector<std::size_t> widths_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
  std::uint64_t version_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW() = default;
  AdamW(AdamConfig cfg, std::size_t parameter_count);

  void step(std::vector<double>& params, std::span<const double> grad);

  const AdamConfig& config() const noexcept { return cfg_; }
  void set_lr(double lr) noexcept { cfg_.lr = lr; }
  std::uint64_t steps() const noexcept { return t_; }
  const std::vector<double>& first_moment() const noexcept { return m_; }
  const std::vector<double>& second_moment() const noexcept { return v_; }
  void restore(std::uint64_t steps, std::vector<double> m, std::vector<double> v);

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

/// Exponential moving average of parameters.
class Ema {
 public:
  Ema() = default;
  Ema(double decay, std::span<const double> params);
  void update(std::span<const double> params);
  const std::vector<double>& value() const noexcept { return shadow_; }
  double decay() const noexcept { return decay_; }

 private:
  double decay_ = 0.9999;
  std::vector<double> shadow_;
};

}  // namespace msm
