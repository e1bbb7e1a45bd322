// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "msm/denoiser.hpp"
#include "msm/diffusion.hpp"
#include "msm/masks.hpp"
#include "msm/sampler.hpp"

namespace msm {

enum class KlEstimator { kGaussianFit, kKnn };

const char* to_string(KlEstimator e);
KlEstimator parse_kl_estimator(const std::string& s);

/// KL(N_A ‖ N_B) between Gaussians fitted to the rows of A and B (covariance
/// plus a 1e-6 ridge).
double kl_gaussian_fit(const Tensor& a, const Tensor& b, double ridge = 1e-6);
/// k-nearest-neighbour divergence estimate of KL(A ‖ B).
double kl_knn(const Tensor& a, const Tensor& b, std::size_t k = 5);
double kl_between_sample_sets(const Tensor& a, const Tensor& b, KlEstimator estimator);

/// Σ_t Δt / (4𝒯_t) with Δt = 1/T.
double c_hat(const WalkParams& walk);

struct VarianceRow {
  std::size_t t = 0;
  double sigma = 0.0;
  std::size_t w = 0;
  /// max over probes of E‖exact − stochastic‖².
  double v2_over_w = 0.0;
};

struct VarianceTable {
  std::vector<VarianceRow> rows;

  /// max over t of v2_over_w for loop count w.
  double max_over_t(std::size_t w) const;
  /// (1/T) Σ_t v2_over_w for loop count w.
  double mean_over_t(std::size_t w) const;
  std::string csv() const;
};

/// Monte Carlo variance of the fixed-weight stochastic score around the exact
/// MSM score at probes z = x + σ_t n, x from `prior`. The same probes are used
/// for every w. `steps` lists the timesteps to evaluate (all when empty).
VarianceTable estimate_variance_bound(const Denoiser& model, const MaskDistribution& dist, const GaussianOracle& prior,
                                      const NoiseSchedule& schedule, const std::vector<std::size_t>& ws,
                                      const std::vector<std::size_t>& steps, std::size_t probes, std::size_t draws,
                                      const Rng& rng);

struct KlStudyConfig {
  std::vector<std::size_t> ws{1, 2, 4, 8};
  std::size_t chains = 2000;
  SamplerConfig sampler;
  KlEstimator estimator = KlEstimator::kGaussianFit;
  std::size_t variance_probes = 8;
  std::size_t variance_draws = 200;
  /// Also run the fixed-weight stochastic-score walk per w.
  bool fixed_weight_walk = true;
};

struct KlStudyRow {
  std::size_t w = 0;
  double kl = 0.0;
  double kl_corrected = 0.0;
  double v2_over_w = 0.0;
  double bound = 0.0;
  double kl_fixed_weight = 0.0;
  double kl_fixed_weight_corrected = 0.0;
};

struct KlStudyReport {
  double floor = 0.0;
  double c_hat = 0.0;
  std::vector<KlStudyRow> rows;
  VarianceTable variance;
  std::size_t chains = 0;

  bool bound_holds() const;
  /// Floor-corrected KL(w=a) / KL(w=b).
  double ratio(std::size_t a, std::size_t b) const;
  /// "w,kl,kl_corrected,bound,v2,C_hat,kl_fixed_weight,kl_fixed_weight_corrected"
  std::string csv() const;
  std::string summary() const;
};

/// Reference chains use the exact MSM score; compared chains run Algorithm 1
/// with each w. KL is reported as KL(reference ‖ compared).
KlStudyReport kl_study(const GaussianOracle& oracle, const MaskDistribution& dist, const KlStudyConfig& cfg,
                       const Rng& rng);

}  // namespace msm
