// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "msm/denoiser.hpp"
#include "msm/diffusion.hpp"
#include "msm/masks.hpp"

namespace msm {

/// How s_t⁽ⁱ⁾ is redrawn around the partial estimate ŝ⁽ⁱ⁾ before write-back.
enum class PartialRenoise {
  /// Keep the current iterate (write-back is then a no-op).
  kKeep,
  /// ŝ + σ_t n.
  kVeRenoise,
};

/// How z_{t−1} is drawn given z_t and the aggregate ẑ.
enum class StepRenoise {
  /// Gaussian bridge of the VE process between levels σ_t and σ_{t−1}.
  kBridge,
  /// ẑ + σ_{t−1} n.
  kVeRenoise,
};

enum class InitRule { kSigmaScaled, kUnit };

const char* to_string(PartialRenoise r);
const char* to_string(StepRenoise r);
const char* to_string(InitRule r);
PartialRenoise parse_partial_renoise(const std::string& s);
StepRenoise parse_step_renoise(const std::string& s);
InitRule parse_init_rule(const std::string& s);

struct SamplerConfig {
  std::size_t w = 1;
  NoiseSchedule schedule = NoiseSchedule::linear_variance(100);
  PartialRenoise partial_renoise = PartialRenoise::kKeep;
  StepRenoise step_renoise = StepRenoise::kBridge;
  InitRule init = InitRule::kSigmaScaled;
  bool record_trace = true;
  /// Keep a copy of ẑ every `snapshot_every` steps (0 disables).
  std::size_t snapshot_every = 0;
};

void validate(const SamplerConfig& cfg);

struct TraceRecord {
  std::size_t t = 0;
  double sigma = 0.0;
  std::size_t masks = 0;
  std::size_t kept_total = 0;
  std::size_t uncovered = 0;
  double weight_min = 0.0;
  double weight_max = 0.0;
  double score_norm = 0.0;
};

struct SampleTrace {
  std::vector<TraceRecord> records;
  std::vector<std::pair<std::size_t, Tensor>> snapshots;

  /// "t,sigma,w,kept_total,uncovered,weight_min,weight_max,score_norm" rows.
  std::string csv() const;
};

struct SampleResult {
  Tensor z0;
  SampleTrace trace;
};

/// Hooks for posterior guidance inside Algorithm 1.
class StepGuidance {
 public:
  virtual ~StepGuidance() = default;
  /// Called on each partial estimate ŝ⁽ⁱ⁾ before aggregation.
  virtual void on_partial(std::size_t /*t*/, const MaskOp& /*mask*/, Tensor& /*s_hat*/) const {}
  /// Called on the aggregate ẑ before renoising to z_{t−1}.
  virtual void on_aggregate(std::size_t /*t*/, Tensor& /*z_hat*/) const {}
};

/// Partial score Sᵀ∇log p_σ(S z) lifted to the full domain, via Tweedie.
Tensor partial_score(const Denoiser& model, const MaskOp& mask, const Tensor& z, double sigma);

/// MSM score W · E_S[Sᵀ score_S(S z)]. Exhaustive over fixed families when
/// n_mc == 0, Monte Carlo with n_mc draws otherwise. `weight` defaults to the
/// exact population weight of `dist`.
Tensor msm_score_exact(const Denoiser& model, const MaskDistribution& dist, const Tensor& z, double sigma,
                       std::size_t n_mc = 0, Rng* rng = nullptr, const Tensor* weight = nullptr);

struct StochasticScore {
  Tensor score;
  std::vector<MaskOp> masks;
  Tensor coverage;
  Tensor weight;
};

/// Score estimate from w i.i.d. masks. With `fixed_weight` the estimator is
/// W·(1/w)·Σ Sᵀscore (unbiased for the MSM score); otherwise the empirical
/// weight 1/max(C,1) multiplies the plain sum Σ Sᵀscore.
StochasticScore msm_score_stochastic(const Denoiser& model, const MaskDistribution& dist, const Tensor& z, double sigma,
                                     std::size_t w, Rng& rng, const Tensor* fixed_weight = nullptr);

/// Initial z_T.
Tensor initial_state(std::size_t n, const SamplerConfig& cfg, Rng& rng);

/// Draws z_{t−1} from z_t and ẑ; returns ẑ at t = 1.
Tensor renoise_step(const Tensor& z_t, const Tensor& z_hat, std::size_t t, const SamplerConfig& cfg, Rng& rng);

/// Algorithm 1.
SampleResult sample_unconditional(const Denoiser& model, const MaskDistribution& dist, const SamplerConfig& cfg,
                                  Rng& rng, const StepGuidance* guidance = nullptr);

enum class ReferenceScore {
  /// Exact MSM score (Eq. 4).
  kExact,
  /// Fixed-weight stochastic estimate with cfg.w masks (Eq. 6).
  kStochasticFixedWeight,
};

/// Same loop with the full-domain score ẑ = z + σ²·score and one renoise of z
/// per step.
Tensor sample_with_exact_score(const Denoiser& model, const MaskDistribution& dist, const SamplerConfig& cfg, Rng& rng,
                               ReferenceScore mode = ReferenceScore::kExact, std::size_t n_mc = 0);

/// Runs `count` independent chains; chain i uses rng.split(i). Rows of the
/// result are samples.
Tensor sample_many(std::size_t count, const Rng& rng, const std::function<Tensor(Rng&)>& chain);

}  // namespace msm
