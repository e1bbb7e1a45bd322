// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msm/errors.hpp"
#include "msm/sampler.hpp"

namespace msm {
namespace {

Eigen::MatrixXd test_covariance() {
  Eigen::MatrixXd cov(4, 4);
  cov << 1.0, 0.5, 0.2, 0.0, 0.5, 1.2, 0.3, 0.1, 0.2, 0.3, 0.9, 0.4, 0.0, 0.1, 0.4, 1.1;
  return cov;
}

const GaussianOracle& oracle4() {
  static const GaussianOracle o(Tensor::vector({0.2, -0.4, 0.1, 0.3}), test_covariance());
  return o;
}

MaskDistribution two_masks() {
  return MaskDistribution::fixed_family({MaskOp(4, {0, 1, 2}), MaskOp(4, {2, 3})}, {0.5, 0.5});
}

TEST(MsmScoreExact, FullMaskIsPlainScore) {
  const auto dist = MaskDistribution::always_full(4);
  const Tensor z = Tensor::vector({0.5, 1.0, -1.0, 2.0});
  const Tensor plain = oracle4().score(MaskOp::full(4), z, 0.7);
  EXPECT_LT(max_abs_diff(msm_score_exact(oracle4(), dist, z, 0.7), plain), 1e-12);
  EXPECT_EQ(weight_from_coverage(dist.expected_coverage()), Tensor(Shape{4}, 1.0));
}

Tensor hand_assembled(const Tensor& z, double sigma) {
  const MaskOp a(4, {0, 1, 2}), b(4, {2, 3});
  const Tensor sa = oracle4().score(a, a.apply(z), sigma);
  const Tensor sb = oracle4().score(b, b.apply(z), sigma);
  // E[C] = (0.5, 0.5, 1, 0.5)
  const Tensor w = Tensor::vector({2.0, 2.0, 1.0, 2.0});
  return hadamard(w, 0.5 * (a.adjoint(sa) + b.adjoint(sb)));
}

TEST(MsmScoreExact, TwoMaskFamilyMatchesHandAssembly) {
  const Tensor z = Tensor::vector({0.3, -0.2, 1.1, 0.4});
  for (double sigma : {0.2, 1.0, 3.0}) {
    EXPECT_LT(max_abs_diff(msm_score_exact(oracle4(), two_masks(), z, sigma), hand_assembled(z, sigma)), 1e-12);
  }
}

TEST(MsmScoreExact, MonteCarloWithinThreeStandardErrors) {
  const Tensor z = Tensor::vector({0.3, -0.2, 1.1, 0.4});
  const double sigma = 0.8;
  const Tensor exact = msm_score_exact(oracle4(), two_masks(), z, sigma);
  // Per-draw variance by enumeration of W ⊙ Sᵀscore.
  const Tensor w = Tensor::vector({2.0, 2.0, 1.0, 2.0});
  Tensor second = Tensor::zeros(4);
  for (const auto& [mask, q] : two_masks().enumerate()) {
    const Tensor v = hadamard(w, mask.adjoint(oracle4().score(mask, mask.apply(z), sigma)));
    second += q * hadamard(v, v);
  }
  const std::size_t n_mc = 10000;
  Rng rng(1);
  const Tensor mc = msm_score_exact(oracle4(), two_masks(), z, sigma, n_mc, &rng);
  for (std::size_t i = 0; i < 4; ++i) {
    const double se = std::sqrt((second[i] - exact[i] * exact[i]) / n_mc);
    EXPECT_LE(std::abs(mc[i] - exact[i]), 3 * se + 1e-15) << i;
  }
}

TEST(MsmScoreStochastic, SingleFullMaskIsPlainScore) {
  Rng rng(2);
  const Tensor z = Tensor::vector({0.5, 1.0, -1.0, 2.0});
  const auto out = msm_score_stochastic(oracle4(), MaskDistribution::always_full(4), z, 0.5, 1, rng);
  EXPECT_LT(max_abs_diff(out.score, oracle4().score(MaskOp::full(4), z, 0.5)), 1e-12);
  EXPECT_EQ(out.masks.size(), 1u);
  EXPECT_EQ(out.weight, Tensor(Shape{4}, 1.0));
}

TEST(MsmScoreStochastic, UnbiasedWithFixedWeight) {
  const Tensor z = Tensor::vector({0.3, -0.2, 1.1, 0.4});
  const double sigma = 0.8;
  const auto dist = two_masks();
  const Tensor weight = weight_from_coverage(dist.expected_coverage());
  const Tensor exact = msm_score_exact(oracle4(), dist, z, sigma);
  Rng rng(3);
  const int calls = 100000;
  std::vector<double> sum(4, 0.0), sq(4, 0.0);
  for (int c = 0; c < calls; ++c) {
    const Tensor s = msm_score_stochastic(oracle4(), dist, z, sigma, 2, rng, &weight).score;
    for (std::size_t i = 0; i < 4; ++i) {
      sum[i] += s[i];
      sq[i] += s[i] * s[i];
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    const double mean = sum[i] / calls;
    const double se = std::sqrt((sq[i] / calls - mean * mean) / calls);
    EXPECT_LE(std::abs(mean - exact[i]), 3 * se) << i;
  }
}

TEST(MsmScoreStochastic, UncoveredCoordinatesAreZero) {
  Rng rng(4);
  const auto dist = MaskDistribution::fixed_family({MaskOp(4, {0, 1})}, {1.0});
  const auto out = msm_score_stochastic(oracle4(), dist, Tensor::vector({1.0, 2.0, 3.0, 4.0}), 0.5, 3, rng);
  EXPECT_EQ(out.score[2], 0.0);
  EXPECT_EQ(out.score[3], 0.0);
  EXPECT_EQ(out.coverage, Tensor::vector({3.0, 3.0, 0.0, 0.0}));
  EXPECT_EQ(out.weight, Tensor::vector({1.0 / 3.0, 1.0 / 3.0, 1.0, 1.0}));
}

struct Moments {
  std::vector<double> mean, var;
};

Moments moments(const Tensor& rows) {
  const std::size_t count = rows.shape()[0], n = rows.shape()[1];
  Moments m{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t i = 0; i < n; ++i) m.mean[i] += rows[r * n + i] / static_cast<double>(count);
  for (std::size_t r = 0; r < count; ++r)
    for (std::size_t i = 0; i < n; ++i) m.var[i] += std::pow(rows[r * n + i] - m.mean[i], 2) / static_cast<double>(count - 1);
  return m;
}

SamplerConfig config(std::size_t steps, std::size_t w) {
  SamplerConfig cfg;
  cfg.schedule = NoiseSchedule::linear_variance(steps);
  cfg.w = w;
  return cfg;
}

TEST(SampleUnconditional, GaussianMomentsWithFullMask) {
  const Tensor mu = Tensor::vector({1.5, -2.0, 3.0});
  const GaussianOracle oracle(mu, Eigen::MatrixXd::Identity(3, 3));
  const auto dist = MaskDistribution::always_full(3);
  // The N(0, σ_T² I) start biases the mean by μ/(1 + σ_T²), about 5% at T=200; T=1000 keeps it near 1%.
  const SamplerConfig cfg = config(1000, 1);
  const Tensor rows = sample_many(2000, Rng(5), [&](Rng& r) { return sample_unconditional(oracle, dist, cfg, r).z0; });
  const Moments m = moments(rows);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(m.mean[i] / mu[i], 1.0, 0.05) << i;
    EXPECT_NEAR(m.var[i], 1.0, 0.1) << i;
  }
}

TEST(SampleWithExactScore, GaussianMomentsWithFullMask) {
  const Tensor mu = Tensor::vector({1.5, -2.0, 3.0});
  const GaussianOracle oracle(mu, Eigen::MatrixXd::Identity(3, 3));
  const auto dist = MaskDistribution::always_full(3);
  const SamplerConfig cfg = config(1000, 1);
  const Tensor rows = sample_many(2000, Rng(6), [&](Rng& r) { return sample_with_exact_score(oracle, dist, cfg, r); });
  const Moments m = moments(rows);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(m.mean[i] / mu[i], 1.0, 0.05) << i;
    EXPECT_NEAR(m.var[i], 1.0, 0.1) << i;
  }
}

double energy_statistic(const std::vector<Eigen::VectorXd>& pts, const std::vector<std::size_t>& order, std::size_t na) {
  const std::size_t n = pts.size(), nb = n - na;
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = (pts[order[i]] - pts[order[j]]).norm();
      const bool ia = i < na, ja = j < na;
      if (ia && ja) aa += 2 * d;
      else if (!ia && !ja) bb += 2 * d;
      else ab += d;
    }
  }
  return 2 * ab / (na * nb) - aa / (na * na) - bb / (nb * nb);
}

TEST(SampleWithExactScore, MatchesAlgorithmInDegenerateFamily) {
  const GaussianOracle oracle(Tensor::vector({0.5, -0.5}), Eigen::MatrixXd::Identity(2, 2));
  const auto dist = MaskDistribution::always_full(2);
  const SamplerConfig cfg = config(50, 1);
  const std::size_t count = 1000;
  const Tensor a = sample_many(count, Rng(7), [&](Rng& r) { return sample_unconditional(oracle, dist, cfg, r).z0; });
  const Tensor b = sample_many(count, Rng(8), [&](Rng& r) { return sample_with_exact_score(oracle, dist, cfg, r); });
  std::vector<Eigen::VectorXd> pts;
  for (const Tensor* t : {&a, &b})
    for (std::size_t r = 0; r < count; ++r) pts.push_back(Eigen::Vector2d((*t)[2 * r], (*t)[2 * r + 1]));
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  const double observed = energy_statistic(pts, order, count);
  // Permutation null.
  Rng rng(9);
  const int perms = 99;
  int exceed = 0;
  for (int p = 0; p < perms; ++p) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_index(i + 1)]);
    exceed += energy_statistic(pts, order, count) >= observed;
  }
  const double p_value = (exceed + 1.0) / (perms + 1.0);
  EXPECT_GT(p_value, 0.01);
}

TEST(SampleUnconditional, TraceRecordsEveryStep) {
  Rng rng(10);
  const auto dist = MaskDistribution::uniform_coords({4, 0.5, 1});
  SamplerConfig cfg = config(30, 3);
  cfg.snapshot_every = 10;
  const auto result = sample_unconditional(oracle4(), dist, cfg, rng);
  ASSERT_EQ(result.trace.records.size(), 30u);
  for (std::size_t k = 0; k < 30; ++k) {
    const auto& r = result.trace.records[k];
    EXPECT_EQ(r.t, 30 - k);
    EXPECT_EQ(r.masks, 3u);
    EXPECT_GT(r.weight_min, 0.0);
    EXPECT_LE(r.weight_max, 1.0);
    EXPECT_GE(r.weight_max, r.weight_min);
  }
  EXPECT_EQ(result.trace.snapshots.size(), 3u);
  EXPECT_EQ(result.trace.snapshots.back().first, 1u);
  EXPECT_EQ(result.trace.snapshots.back().second, result.z0);
  const std::string csv = result.trace.csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 31);
}

TEST(SampleUnconditional, ComplementaryMasksLeaveNothingUncovered) {
  Rng rng(11);
  const MaskOp a(4, {0}), b(4, {1, 2, 3});
  const auto dist = MaskDistribution::fixed_family({a, b}, {0.5, 0.5});
  for (PartialRenoise pr : {PartialRenoise::kKeep, PartialRenoise::kVeRenoise}) {
    SamplerConfig cfg = config(40, 2);
    cfg.partial_renoise = pr;
    const auto result = sample_unconditional(oracle4(), dist, cfg, rng);
    for (const auto& r : result.trace.records) {
      // Both drawn: nothing uncovered. Same mask twice: its complement is.
      EXPECT_EQ(r.uncovered == 0, r.kept_total == 4);
      EXPECT_TRUE(r.uncovered == 0 || (r.uncovered == 3 && r.kept_total == 2) || (r.uncovered == 1 && r.kept_total == 6));
    }
  }
  const auto full = MaskDistribution::fixed_family({MaskOp::full(4)}, {1.0});
  for (const auto& r : sample_unconditional(oracle4(), full, config(20, 2), rng).trace.records) EXPECT_EQ(r.uncovered, 0u);
}

TEST(SampleUnconditional, DeterministicGivenSeed) {
  const auto dist = MaskDistribution::uniform_coords({4, 0.5, 1});
  for (PartialRenoise pr : {PartialRenoise::kKeep, PartialRenoise::kVeRenoise}) {
    SamplerConfig cfg = config(25, 2);
    cfg.partial_renoise = pr;
    Rng a(12), b(12);
    EXPECT_EQ(sample_unconditional(oracle4(), dist, cfg, a).z0, sample_unconditional(oracle4(), dist, cfg, b).z0);
  }
  const auto chain = [&](Rng& r) { return sample_with_exact_score(oracle4(), two_masks(), config(20, 1), r); };
  EXPECT_EQ(sample_many(8, Rng(13), chain), sample_many(8, Rng(13), chain));
}

TEST(SampleUnconditional, PartialEstimatesAreOracleOutputs) {
  // With the keep rule s_t = S z, so each partial ŝ must equal the oracle's output on S z.
  struct Check : StepGuidance {
    mutable std::vector<std::pair<MaskOp, Tensor>> seen;
    void on_partial(std::size_t, const MaskOp& mask, Tensor& s_hat) const override { seen.emplace_back(mask, s_hat); }
  } check;
  const auto dist = MaskDistribution::fixed_family({MaskOp(4, {0, 1, 2}), MaskOp::full(4)}, {0.5, 0.5});
  const SamplerConfig cfg = config(1, 1);
  Rng rng(14), replay(14);
  sample_unconditional(oracle4(), dist, cfg, rng, &check);
  ASSERT_EQ(check.seen.size(), 1u);
  const Tensor z = initial_state(4, cfg, replay);
  const MaskOp& mask = check.seen[0].first;
  EXPECT_LT(max_abs_diff(check.seen[0].second, oracle4().denoise(mask, mask.apply(z), cfg.schedule.sigma(1))), 1e-12);
}

TEST(SamplerConfig, Validation) {
  SamplerConfig cfg;
  cfg.w = 0;
  EXPECT_THROW(validate(cfg), Error);
  EXPECT_EQ(parse_partial_renoise("ve_renoise"), PartialRenoise::kVeRenoise);
  EXPECT_EQ(parse_step_renoise("bridge"), StepRenoise::kBridge);
  EXPECT_EQ(parse_init_rule("unit"), InitRule::kUnit);
  EXPECT_THROW(parse_init_rule("zeros"), Error);
  Rng rng(15);
  EXPECT_THROW(sample_unconditional(oracle4(), MaskDistribution::always_full(5), SamplerConfig{}, rng), Error);
}

TEST(RenoiseStep, FinalStepReturnsEstimate) {
  Rng rng(16);
  const SamplerConfig cfg = config(10, 1);
  const Tensor z = Tensor::vector({1.0, 2.0}), z_hat = Tensor::vector({0.5, 0.5});
  EXPECT_EQ(renoise_step(z, z_hat, 1, cfg, rng), z_hat);
  // Bridge mean: a z + (1 − a) ẑ with a = σ²_{t−1}/σ²_t.
  const double a = std::pow(cfg.schedule.sigma(4) / cfg.schedule.sigma(5), 2);
  double sum = 0.0;
  const int draws = 20000;
  for (int d = 0; d < draws; ++d) sum += renoise_step(z, z_hat, 5, cfg, rng)[0];
  EXPECT_NEAR(sum / draws, a * 1.0 + (1 - a) * 0.5, 0.01);
}

}  // namespace
}  // namespace msm
