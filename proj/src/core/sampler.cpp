// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "msm/errors.hpp"
#include "msm/parallel.hpp"

namespace msm {

const char* to_string(PartialRenoise r) { return r == PartialRenoise::kKeep ? "keep" : "ve_renoise"; }
const char* to_string(StepRenoise r) { return r == StepRenoise::kBridge ? "bridge" : "ve_renoise"; }
const char* to_string(InitRule r) { return r == InitRule::kSigmaScaled ? "sigma_scaled" : "unit"; }

PartialRenoise parse_partial_renoise(const std::string& s) {
  if (s == "keep") return PartialRenoise::kKeep;
  if (s == "ve_renoise") return PartialRenoise::kVeRenoise;
  fail(ErrorKind::kConfig, "unknown partial renoise rule '" + s + "' (keep|ve_renoise)");
}

StepRenoise parse_step_renoise(const std::string& s) {
  if (s == "bridge") return StepRenoise::kBridge;
  if (s == "ve_renoise") return StepRenoise::kVeRenoise;
  fail(ErrorKind::kConfig, "unknown step renoise rule '" + s + "' (bridge|ve_renoise)");
}

InitRule parse_init_rule(const std::string& s) {
  if (s == "sigma_scaled") return InitRule::kSigmaScaled;
  if (s == "unit") return InitRule::kUnit;
  fail(ErrorKind::kConfig, "unknown init rule '" + s + "' (sigma_scaled|unit)");
}

void validate(const SamplerConfig& cfg) {
  if (cfg.w == 0) fail(ErrorKind::kConfig, "sampler needs w >= 1");
  if (cfg.schedule.steps() == 0) fail(ErrorKind::kConfig, "sampler needs T >= 1");
}

std::string SampleTrace::csv() const {
  std::string out = "t,sigma,w,kept_total,uncovered,weight_min,weight_max,score_norm\n";
  for (const auto& r : records) {
    out += std::to_string(r.t) + "," + format_double(r.sigma) + "," + std::to_string(r.masks) + "," +
           std::to_string(r.kept_total) + "," + std::to_string(r.uncovered) + "," + format_double(r.weight_min) + "," +
           format_double(r.weight_max) + "," + format_double(r.score_norm) + "\n";
  }
  return out;
}

Tensor partial_score(const Denoiser& model, const MaskOp& mask, const Tensor& z, double sigma) {
  const Tensor s_t = mask.apply(z);
  return mask.adjoint(tweedie_score(model.denoise(mask, s_t, sigma), s_t, sigma));
}

Tensor msm_score_exact(const Denoiser& model, const MaskDistribution& dist, const Tensor& z, double sigma,
                       std::size_t n_mc, Rng* rng, const Tensor* weight) {
  if (z.size() != dist.n() || model.measurement_size() != dist.n()) fail(ErrorKind::kShape, "MSM score: dimension mismatch");
  const Tensor w = weight ? *weight : weight_from_coverage(dist.expected_coverage());
  Tensor acc = Tensor::zeros(dist.n());
  if (n_mc == 0) {
    for (const auto& [mask, q] : dist.enumerate()) acc += partial_score(model, mask, z, sigma) * q;
  } else {
    if (!rng) fail(ErrorKind::kConfig, "Monte Carlo MSM score needs an RNG");
    for (std::size_t k = 0; k < n_mc; ++k) acc += partial_score(model, dist.sample(*rng), z, sigma);
    acc *= 1.0 / static_cast<double>(n_mc);
  }
  return hadamard(w, acc);
}

StochasticScore msm_score_stochastic(const Denoiser& model, const MaskDistribution& dist, const Tensor& z, double sigma,
                                     std::size_t w, Rng& rng, const Tensor* fixed_weight) {
  if (w == 0) fail(ErrorKind::kConfig, "stochastic score needs w >= 1");
  if (z.size() != dist.n()) fail(ErrorKind::kShape, "MSM score: dimension mismatch");
  StochasticScore out;
  Tensor acc = Tensor::zeros(dist.n());
  for (std::size_t i = 0; i < w; ++i) {
    out.masks.push_back(dist.sample(rng));
    acc += partial_score(model, out.masks.back(), z, sigma);
  }
  auto cw = coverage_and_weight(out.masks, dist.n());
  out.coverage = std::move(cw.coverage);
  if (fixed_weight) {
    out.weight = *fixed_weight;
    out.score = hadamard(out.weight, acc) * (1.0 / static_cast<double>(w));
  } else {
    out.weight = std::move(cw.weight);
    out.score = hadamard(out.weight, acc);
  }
  return out;
}

Tensor initial_state(std::size_t n, const SamplerConfig& cfg, Rng& rng) {
  const double scale = cfg.init == InitRule::kSigmaScaled ? cfg.schedule.sigmas().back() : 1.0;
  return gaussian(rng, {n}) * scale;
}

Tensor renoise_step(const Tensor& z_t, const Tensor& z_hat, std::size_t t, const SamplerConfig& cfg, Rng& rng) {
  if (t <= 1) return z_hat;
  const double s_now = cfg.schedule.sigma(t);
  const double s_next = cfg.schedule.sigma(t - 1);
  Tensor out = z_hat;
  if (cfg.step_renoise == StepRenoise::kVeRenoise) {
    for (double& v : out.values()) v += s_next * rng.gaussian();
    return out;
  }
  const double a = (s_next * s_next) / (s_now * s_now);
  const double sd = std::sqrt(s_next * s_next * (1.0 - a));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * z_t[i] + (1.0 - a) * z_hat[i] + sd * rng.gaussian();
  return out;
}

SampleResult sample_unconditional(const Denoiser& model, const MaskDistribution& dist, const SamplerConfig& cfg,
                                  Rng& rng, const StepGuidance* guidance) {
  validate(cfg);
  const std::size_t n = dist.n();
  if (model.measurement_size() != n) fail(ErrorKind::kShape, "denoiser and mask distribution disagree on n");
  SampleResult result;
  Tensor z = initial_state(n, cfg, rng);
  Tensor z_hat = Tensor::zeros(n);
  for (std::size_t t = cfg.schedule.steps(); t >= 1; --t) {
    const double sigma = cfg.schedule.sigma(t);
    Tensor acc = Tensor::zeros(n);
    Tensor score_acc = Tensor::zeros(n);
    Tensor coverage = Tensor::zeros(n);
    std::size_t kept_total = 0;
    for (std::size_t i = 0; i < cfg.w; ++i) {
      const MaskOp mask = dist.sample(rng);
      const Tensor s_t = mask.apply(z);
      const Tensor score = tweedie_score(model.denoise(mask, s_t, sigma), s_t, sigma);
      Tensor s_hat = tweedie_denoise(s_t, score, sigma);
      if (guidance) guidance->on_partial(t, mask, s_hat);
      mask.adjoint_add(s_hat, acc);
      mask.adjoint_add(score, score_acc);
      for (std::size_t k : mask.indices()) coverage[k] += 1.0;
      kept_total += mask.m();
      if (cfg.partial_renoise == PartialRenoise::kVeRenoise) {
        // Write back S s_t into z; coordinates outside S are untouched.
        const auto& idx = mask.indices();
        for (std::size_t k = 0; k < idx.size(); ++k) z[idx[k]] = s_hat[k] + sigma * rng.gaussian();
      }
    }
    std::size_t uncovered = 0;
    double w_min = 1.0, w_max = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double wk = 1.0 / std::max(coverage[k], 1.0);
      w_min = std::min(w_min, wk);
      w_max = std::max(w_max, wk);
      score_acc[k] *= wk;
      if (coverage[k] == 0.0) {
        ++uncovered;
      } else {
        z_hat[k] = wk * acc[k];
      }
    }
    if (guidance) guidance->on_aggregate(t, z_hat);
    require_finite(z_hat, "sampler aggregate");
    if (cfg.record_trace) {
      result.trace.records.push_back({t, sigma, cfg.w, kept_total, uncovered, w_min, w_max, norm2(score_acc)});
    }
    if (cfg.snapshot_every > 0 && (t - 1) % cfg.snapshot_every == 0) result.trace.snapshots.emplace_back(t, z_hat);
    z = renoise_step(z, z_hat, t, cfg, rng);
  }
  result.z0 = std::move(z);
  return result;
}

Tensor sample_with_exact_score(const Denoiser& model, const MaskDistribution& dist, const SamplerConfig& cfg, Rng& rng,
                               ReferenceScore mode, std::size_t n_mc) {
  validate(cfg);
  const std::size_t n = dist.n();
  if (model.measurement_size() != n) fail(ErrorKind::kShape, "denoiser and mask distribution disagree on n");
  const Tensor weight = weight_from_coverage(dist.expected_coverage());
  Tensor z = initial_state(n, cfg, rng);
  for (std::size_t t = cfg.schedule.steps(); t >= 1; --t) {
    const double sigma = cfg.schedule.sigma(t);
    const Tensor score = mode == ReferenceScore::kExact
                             ? msm_score_exact(model, dist, z, sigma, n_mc, &rng, &weight)
                             : msm_score_stochastic(model, dist, z, sigma, cfg.w, rng, &weight).score;
    const Tensor z_hat = tweedie_denoise(z, score, sigma);
    require_finite(z_hat, "reference sampler");
    z = renoise_step(z, z_hat, t, cfg, rng);
  }
  return z;
}

Tensor sample_many(std::size_t count, const Rng& rng, const std::function<Tensor(Rng&)>& chain) {
  std::vector<Tensor> rows(count);
  parallel_for(count, [&](std::size_t i) {
    Rng r = rng.split(i);
    rows[i] = chain(r);
  });
  return stack_rows(rows);
}

}  // namespace msm
