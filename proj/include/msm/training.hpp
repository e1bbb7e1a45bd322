// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msm/denoiser.hpp"
#include "msm/diffusion.hpp"
#include "msm/masks.hpp"
#include "msm/mlp.hpp"

namespace msm {

/// A subsampled training measurement s = S z (+ ν) with its mask.
struct TrainSample {
  MaskOp mask;
  Tensor s;
};

/// Per-element loss values. `total` = `diffusion` + `sure`.
struct LossBreakdown {
  std::vector<double> total;
  std::vector<double> diffusion;
  std::vector<double> sure;

  double mean() const;
};

struct SureOptions {
  std::size_t probes = 1;
  /// Finite-difference step; 0 selects max(1e-3, ρ·1e-2).
  double delta = 0.0;
};

double sure_delta(double rho, const SureOptions& opts);

/// Gradient plumbing shared by the losses: when `grad` is nonempty the
/// gradient of grad_scale · Σ total is accumulated into it.
struct GradSink {
  std::span<double> grad;
  double scale = 1.0;
  bool active() const noexcept { return !grad.empty(); }
};

/// ‖s − ŝ(s + σn; σ)‖² / m per element.
LossBreakdown loss_clean(const Denoiser& model, const std::vector<TrainSample>& batch, const std::vector<double>& sigma,
                         Rng& rng, GradSink sink = {});

/// Noisy data with σ > ρ: s_t = s + sqrt(σ² − ρ²) n, estimator
/// ((σ² − ρ²)/σ²)(ŝ − s_t) + s_t, plus the SURE term at level ρ.
LossBreakdown loss_case1(const Denoiser& model, const std::vector<TrainSample>& batch, const std::vector<double>& sigma,
                         double rho, const SureOptions& sure, Rng& rng, GradSink sink = {});

/// Noisy data with σ <= ρ: pseudo-clean r = ŝ(s; ρ) (no gradient through r),
/// s_t = r + σ n, loss ‖r − ŝ(s_t; σ)‖² / m, plus the SURE term. `reference`
/// computes r when given; it defaults to `model`.
LossBreakdown loss_case2(const Denoiser& model, const std::vector<TrainSample>& batch, const std::vector<double>& sigma,
                         double rho, const SureOptions& sure, Rng& rng, GradSink sink = {},
                         const Denoiser* reference = nullptr);

/// ‖s − ŝ(s; ρ)‖²/m − ρ² + (2ρ²/m)·div with a Rademacher-probe divergence.
LossBreakdown loss_sure(const Denoiser& model, const std::vector<TrainSample>& batch, double rho,
                        const SureOptions& sure, Rng& rng, GradSink sink = {});

/// Monte Carlo divergence of s ↦ ŝ(s; σ) at s.
double sure_divergence(const Denoiser& model, const MaskOp& mask, const Tensor& s, double sigma, std::size_t probes,
                       double delta, Rng& rng);

enum class LossMode { kClean, kNoisy };

struct TrainConfig {
  LossMode mode = LossMode::kClean;
  double rho = 0.0;
  std::size_t batch = 32;
  std::size_t iterations = 1000;
  AdamConfig adam;
  SureOptions sure;
  bool ema = false;
  double ema_decay = 0.9999;
};

/// Rejects inconsistent settings before any work (CaseMismatch for noisy
/// training without measurement noise).
void validate(const TrainConfig& cfg);

enum class CaseTag { kClean, kCase1, kCase2, kMixed };
const char* to_string(CaseTag tag);

/// Case 1 when σ > ρ, Case 2 otherwise.
CaseTag dispatch_case(double sigma, double rho);

struct LossRecord {
  std::size_t iteration;
  double loss;
  CaseTag tag;
};

/// Optimizer state carried across (resumed) training runs.
struct TrainState {
  std::size_t iteration = 0;
  std::optional<AdamW> optimizer;
  std::optional<Ema> ema;
};

/// Runs cfg.iterations further optimizer steps. Iteration i draws from
/// rng.split(i), so a resumed run continues the same stream.
std::vector<LossRecord> train(MlpDenoiser& model, const std::vector<TrainSample>& data, const NoiseSchedule& schedule,
                              const TrainConfig& cfg, TrainState& state, const Rng& rng);

/// "iter,loss,case_tag" rows.
std::string loss_csv(const std::vector<LossRecord>& records);

}  // namespace msm
