// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/diffusion.hpp"

#include <bit>
#include <cmath>

#include "msm/errors.hpp"

namespace msm {

NoiseSchedule NoiseSchedule::linear_variance(std::size_t steps, double beta_start, double beta_end) {
  if (steps == 0) fail(ErrorKind::kConfig, "schedule needs at least one step");
  if (!(beta_start > 0.0) || !(beta_end >= beta_start)) fail(ErrorKind::kConfig, "schedule needs 0 < beta_start <= beta_end");
  NoiseSchedule s;
  s.beta_start_ = beta_start;
  s.beta_end_ = beta_end;
  s.sigmas_.resize(steps);
  double total = 0.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    total += beta_start + (beta_end - beta_start) * frac;
    s.sigmas_[i] = std::sqrt(total);
  }
  return s;
}

double NoiseSchedule::sigma(std::size_t t) const {
  if (t == 0) return 0.0;
  if (t > sigmas_.size()) fail(ErrorKind::kConfig, "timestep " + std::to_string(t) + " beyond schedule");
  return sigmas_[t - 1];
}

std::string NoiseSchedule::csv() const {
  std::string out = "t,sigma\n";
  for (std::size_t i = 0; i < sigmas_.size(); ++i) out += std::to_string(i + 1) + "," + format_double(sigmas_[i]) + "\n";
  return out;
}

std::uint64_t NoiseSchedule::hash() const {
  std::uint64_t h = splitmix64(sigmas_.size());
  for (double s : sigmas_) h = splitmix64(h ^ std::bit_cast<std::uint64_t>(s));
  return h;
}

WalkParams WalkParams::from_schedule(const NoiseSchedule& schedule, double step_scale) {
  if (!(step_scale > 0.0)) fail(ErrorKind::kConfig, "step_scale must be positive");
  WalkParams p;
  for (double s : schedule.sigmas()) {
    p.tau.push_back(s * s * step_scale);
    p.temp.push_back(1.0);
  }
  return p;
}

Tensor add_noise(const Tensor& s, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) fail(ErrorKind::kConfig, "noise level must be nonnegative");
  Tensor out = s;
  for (double& v : out.values()) v += sigma * rng.gaussian();
  return out;
}

Tensor tweedie_score(const Tensor& s_hat, const Tensor& s_t, double sigma) {
  if (!(sigma > 0.0)) fail(ErrorKind::kDegenerateNoise, "Tweedie score needs sigma > 0");
  require_same_size(s_hat, s_t, "tweedie_score");
  const double inv = 1.0 / (sigma * sigma);
  Tensor out = s_hat;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (s_hat[i] - s_t[i]) * inv;
  return out;
}

Tensor tweedie_denoise(const Tensor& s_t, const Tensor& score, double sigma) {
  require_same_size(s_t, score, "tweedie_denoise");
  const double var = sigma * sigma;
  Tensor out = s_t;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s_t[i] + var * score[i];
  return out;
}

Tensor walk_step(const Tensor& z, const Tensor& score, double tau, double temp, Rng& rng) {
  if (!(tau > 0.0) || !(temp >= 0.0)) fail(ErrorKind::kConfig, "walk step needs tau > 0 and temp >= 0");
  require_same_size(z, score, "walk_step");
  const double noise = std::sqrt(2.0 * tau * temp);
  Tensor out = z;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = z[i] + tau * score[i] + noise * rng.gaussian();
  return out;
}

}  // namespace msm
