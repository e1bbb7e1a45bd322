// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "msm/numerics.hpp"

namespace msm {

/// Variance-exploding noise levels σ_1 < ... < σ_T with σ_t² the cumulative
/// sum of a linearly increasing variance increment.
class NoiseSchedule {
 public:
  static NoiseSchedule linear_variance(std::size_t steps, double beta_start = 1e-4, double beta_end = 0.2);

  std::size_t steps() const noexcept { return sigmas_.size(); }
  /// σ_t for t in [1, T]; σ_0 = 0.
  double sigma(std::size_t t) const;
  const std::vector<double>& sigmas() const noexcept { return sigmas_; }
  double beta_start() const noexcept { return beta_start_; }
  double beta_end() const noexcept { return beta_end_; }

  /// "t,sigma" rows.
  std::string csv() const;
  /// Stable digest of the levels, stored in checkpoints.
  std::uint64_t hash() const;

 private:
  std::vector<double> sigmas_;
  double beta_start_ = 0.0;
  double beta_end_ = 0.0;
};

/// Step sizes τ_t and temperatures 𝒯_t of the random walk.
struct WalkParams {
  std::vector<double> tau;
  std::vector<double> temp;

  /// τ_t = σ_t² · step_scale, 𝒯_t = 1.
  static WalkParams from_schedule(const NoiseSchedule& schedule, double step_scale = 1.0);
};

/// s + σ n with fresh standard Gaussian n.
Tensor add_noise(const Tensor& s, double sigma, Rng& rng);

/// (ŝ − s_t) / σ².
Tensor tweedie_score(const Tensor& s_hat, const Tensor& s_t, double sigma);

/// s_t + σ² · score, the inverse of tweedie_score.
Tensor tweedie_denoise(const Tensor& s_t, const Tensor& score, double sigma);

/// z + τ·score + sqrt(2τ𝒯)·n.
Tensor walk_step(const Tensor& z, const Tensor& score, double tau, double temp, Rng& rng);

}  // namespace msm
