// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/mlp.hpp"

#include <cmath>

#include "msm/errors.hpp"

namespace msm {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<std::size_t> layout(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) fail(ErrorKind::kConfig, "network needs input and output widths");
  for (std::size_t w : widths) {
    if (w == 0) fail(ErrorKind::kConfig, "network widths must be positive");
  }
  std::vector<std::size_t> offsets{0};
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) offsets.push_back(offsets.back() + widths[l + 1] * (widths[l] + 1));
  return offsets;
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> widths) : widths_(std::move(widths)), offsets_(layout(widths_)) {
  params_.assign(offsets_.back(), 0.0);
}

Mlp::Mlp(std::vector<std::size_t> widths, Rng& rng) : Mlp(std::move(widths)) {
  const std::size_t layers = widths_.size() - 1;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const double scale = std::sqrt(1.0 / static_cast<double>(widths_[l]));
    const std::size_t count = widths_[l + 1] * widths_[l];
    for (std::size_t i = 0; i < count; ++i) params_[offsets_[l] + i] = scale * rng.gaussian();
  }
}

void Mlp::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size()) fail(ErrorKind::kShape, "parameter count mismatch");
  params_.assign(values.begin(), values.end());
  touch();
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape* tape) const {
  if (static_cast<std::size_t>(x.rows()) != input_size()) fail(ErrorKind::kShape, "network input has wrong width");
  const std::size_t layers = widths_.size() - 1;
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
    tape->version = version_;
  }
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto rows = static_cast<Eigen::Index>(widths_[l + 1]);
    const auto cols = static_cast<Eigen::Index>(widths_[l]);
    Eigen::Map<const RowMajor> weight(params_.data() + offsets_[l], rows, cols);
    Eigen::Map<const Eigen::VectorXd> bias(params_.data() + offsets_[l] + widths_[l + 1] * widths_[l], rows);
    Eigen::MatrixXd z = weight * h;
    z.colwise() += bias;
    if (tape) tape->inputs.push_back(h);
    if (l + 1 == layers) return z;
    if (tape) tape->pre.push_back(z);
    h = z.unaryExpr([](double v) { return v * sigmoid(v); });
  }
  return h;
}

void Mlp::backward(const Tape& tape, const Eigen::MatrixXd& d_out, std::span<double> grad) const {
  if (tape.version != version_) fail(ErrorKind::kContractViolation, "backward called with a tape from before a parameter update");
  const std::size_t layers = widths_.size() - 1;
  if (tape.inputs.size() != layers) fail(ErrorKind::kContractViolation, "backward needs a taped forward pass");
  if (grad.size() != params_.size()) fail(ErrorKind::kShape, "gradient buffer has wrong size");
  Eigen::MatrixXd delta = d_out;
  for (std::size_t l = layers; l-- > 0;) {
    const auto rows = static_cast<Eigen::Index>(widths_[l + 1]);
    const auto cols = static_cast<Eigen::Index>(widths_[l]);
    Eigen::Map<const RowMajor> weight(params_.data() + offsets_[l], rows, cols);
    Eigen::Map<RowMajor> g_weight(grad.data() + offsets_[l], rows, cols);
    Eigen::Map<Eigen::VectorXd> g_bias(grad.data() + offsets_[l] + widths_[l + 1] * widths_[l], rows);
    g_weight.noalias() += delta * tape.inputs[l].transpose();
    g_bias += delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd d_h = weight.transpose() * delta;
    const Eigen::MatrixXd& pre = tape.pre[l - 1];
    delta = d_h.cwiseProduct(pre.unaryExpr([](double v) {
      const double s = sigmoid(v);
      return s * (1.0 + v * (1.0 - s));
    }));
  }
}

AdamW::AdamW(AdamConfig cfg, std::size_t parameter_count)
    : cfg_(cfg), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {
  if (!(cfg.lr > 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) ||
      !(cfg.eps > 0.0) || !(cfg.weight_decay >= 0.0)) {
    fail(ErrorKind::kConfig, "invalid optimizer settings");
  }
}

void AdamW::step(std::vector<double>& params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) fail(ErrorKind::kShape, "optimizer state size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] *= 1.0 - cfg_.lr * cfg_.weight_decay;
    params[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
  }
}

void AdamW::restore(std::uint64_t steps, std::vector<double> m, std::vector<double> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) fail(ErrorKind::kShape, "optimizer state size mismatch");
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

Ema::Ema(double decay, std::span<const double> params) : decay_(decay), shadow_(params.begin(), params.end()) {
  if (!(decay >= 0.0 && decay < 1.0)) fail(ErrorKind::kConfig, "EMA decay must lie in [0, 1)");
}

void Ema::update(std::span<const double> params) {
  if (params.size() != shadow_.size()) fail(ErrorKind::kShape, "EMA size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) shadow_[i] = decay_ * shadow_[i] + (1.0 - decay_) * params[i];
}

}  // namespace msm
