// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "msm/masks.hpp"
#include "msm/mlp.hpp"
#include "msm/numerics.hpp"
#include "msm/transforms.hpp"

namespace msm {

/// One denoiser evaluation ŝ(s_t; σ) on the coordinates selected by `mask`.
struct Query {
  const MaskOp* mask = nullptr;
  Tensor s_t;
  double sigma = 0.0;
};

/// Opaque record of a batched forward pass, consumed by backward.
struct ForwardPass {
  virtual ~ForwardPass() = default;
};

/// Noise-conditioned denoiser acting on subsampled measurements.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// Full measurement dimension n.
  virtual std::size_t measurement_size() const = 0;
  /// ŝ for s_t = S z + σ n; output has mask.m() entries.
  virtual Tensor denoise(const MaskOp& mask, const Tensor& s_t, double sigma) const = 0;

  virtual std::size_t parameter_count() const { return 0; }
  /// Batched evaluation. The returned pass (null for parameter-free
  /// denoisers) feeds backward.
  virtual std::unique_ptr<ForwardPass> forward(const std::vector<Query>& queries, std::vector<Tensor>& outputs) const;
  /// Accumulates dLoss/dθ given dLoss/dŝ for every query of `pass`.
  virtual void backward(const ForwardPass* pass, const std::vector<Tensor>& d_outputs, std::span<double> grad) const;
};

/// Exact posterior mean for a Gaussian prior N(μ, Σ) on the full measurement.
class GaussianOracle : public Denoiser {
 public:
  GaussianOracle(Tensor mean, Eigen::MatrixXd covariance);

  std::size_t measurement_size() const override { return static_cast<std::size_t>(mean_.size()); }
  Tensor denoise(const MaskOp& mask, const Tensor& s_t, double sigma) const override;

  /// Analytic ∇ log N(μ_S, Σ_S + σ²I) at s_t.
  Tensor score(const MaskOp& mask, const Tensor& s_t, double sigma) const;
  /// Draw from the prior.
  Tensor sample(Rng& rng) const;

  const Tensor& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& covariance() const noexcept { return cov_; }

 private:
  struct Gain {
    Eigen::MatrixXd gain;       // Σ_S (Σ_S + σ²I)⁻¹
    Eigen::MatrixXd precision;  // (Σ_S + σ²I)⁻¹
  };
  std::shared_ptr<const Gain> gain(const MaskOp& mask, double sigma) const;
  Eigen::VectorXd solve(const MaskOp& mask, double sigma, const Eigen::VectorXd& r) const;

  Tensor mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;  // lower Cholesky factor of Σ (with tiny jitter), for sampling
  mutable std::mutex mutex_;
  mutable std::map<std::pair<std::vector<std::size_t>, double>, std::shared_ptr<const Gain>> cache_;
  mutable std::size_t cached_entries_ = 0;
};

/// Architecture of the trainable denoiser.
struct MlpDenoiserArch {
  std::vector<std::size_t> hidden{128, 128};
  double sigma_data = 1.0;
};

/// Small noise-conditioned network. It sees c_in·Tᵀ(Sᵀs_t), the coverage
/// indicator in the measurement domain, and ln(σ)/4; its image-domain output
/// is combined with a skip connection and mapped back through S T.
class MlpDenoiser : public Denoiser {
 public:
  MlpDenoiser(Transform transform, MlpDenoiserArch arch, Rng& rng);
  MlpDenoiser(Transform transform, MlpDenoiserArch arch, Mlp net);

  std::size_t measurement_size() const override { return transform_.measurement_size(); }
  Tensor denoise(const MaskOp& mask, const Tensor& s_t, double sigma) const override;

  std::size_t parameter_count() const override { return net_.parameter_count(); }
  std::unique_ptr<ForwardPass> forward(const std::vector<Query>& queries, std::vector<Tensor>& outputs) const override;
  void backward(const ForwardPass* pass, const std::vector<Tensor>& d_outputs, std::span<double> grad) const override;

  const Transform& transform() const noexcept { return transform_; }
  const MlpDenoiserArch& arch() const noexcept { return arch_; }
  const Mlp& net() const noexcept { return net_; }
  Mlp& net() noexcept { return net_; }

  /// Input width for a transform: image size + measurement size + 1.
  static std::size_t input_width(const Transform& transform);

 private:
  Transform transform_;
  MlpDenoiserArch arch_;
  Mlp net_;
};

/// ŝ = s_t, the noisy input itself.
class IdentityDenoiser : public Denoiser {
 public:
  explicit IdentityDenoiser(std::size_t n) : n_(n) {}
  std::size_t measurement_size() const override { return n_; }
  Tensor denoise(const MaskOp& mask, const Tensor& s_t, double sigma) const override;

 private:
  std::size_t n_;
};

}  // namespace msm
