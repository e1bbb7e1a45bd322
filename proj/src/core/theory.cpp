// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/theory.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "msm/errors.hpp"
#include "msm/parallel.hpp"

namespace msm {

const char* to_string(KlEstimator e) { return e == KlEstimator::kGaussianFit ? "gaussian_fit" : "knn"; }

KlEstimator parse_kl_estimator(const std::string& s) {
  if (s == "gaussian_fit") return KlEstimator::kGaussianFit;
  if (s == "knn") return KlEstimator::kKnn;
  fail(ErrorKind::kConfig, "unknown KL estimator '" + s + "' (gaussian_fit|knn)");
}

namespace {

Eigen::MatrixXd rows_of(const Tensor& t) {
  if (t.shape().size() != 2 || t.shape()[0] < 2) fail(ErrorKind::kShape, "sample sets must be [N, d] with N >= 2");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.shape()[0]), static_cast<Eigen::Index>(t.shape()[1]));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t[static_cast<std::size_t>(i * m.cols() + j)];
  }
  return m;
}

void fit(const Eigen::MatrixXd& x, double ridge, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - mean.transpose();
  cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  cov.diagonal().array() += ridge;
}

}  // namespace

double kl_gaussian_fit(const Tensor& a, const Tensor& b, double ridge) {
  const Eigen::MatrixXd xa = rows_of(a), xb = rows_of(b);
  if (xa.cols() != xb.cols()) fail(ErrorKind::kShape, "sample sets differ in dimension");
  Eigen::VectorXd ma, mb;
  Eigen::MatrixXd ca, cb;
  fit(xa, ridge, ma, ca);
  fit(xb, ridge, mb, cb);
  Eigen::LLT<Eigen::MatrixXd> la(ca), lb(cb);
  if (la.info() != Eigen::Success || lb.info() != Eigen::Success) fail(ErrorKind::kNumerical, "fitted covariance is singular");
  const double logdet_a = 2.0 * la.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet_b = 2.0 * lb.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const Eigen::VectorXd d = mb - ma;
  const double trace = lb.solve(ca).trace();
  const double quad = d.dot(lb.solve(d));
  const double k = static_cast<double>(xa.cols());
  return 0.5 * (trace + quad - k + logdet_b - logdet_a);
}

double kl_knn(const Tensor& a, const Tensor& b, std::size_t k) {
  const Eigen::MatrixXd xa = rows_of(a), xb = rows_of(b);
  if (xa.cols() != xb.cols()) fail(ErrorKind::kShape, "sample sets differ in dimension");
  const auto n = static_cast<std::size_t>(xa.rows());
  const auto m = static_cast<std::size_t>(xb.rows());
  if (k == 0 || k >= n || k > m) fail(ErrorKind::kConfig, "kNN estimator needs 1 <= k < N");
  const double d = static_cast<double>(xa.cols());
  std::vector<double> terms(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> da, db;
    da.reserve(n);
    db.reserve(m);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) da.push_back((xa.row(static_cast<Eigen::Index>(i)) - xa.row(static_cast<Eigen::Index>(j))).squaredNorm());
    }
    for (std::size_t j = 0; j < m; ++j) db.push_back((xa.row(static_cast<Eigen::Index>(i)) - xb.row(static_cast<Eigen::Index>(j))).squaredNorm());
    std::nth_element(da.begin(), da.begin() + static_cast<std::ptrdiff_t>(k - 1), da.end());
    std::nth_element(db.begin(), db.begin() + static_cast<std::ptrdiff_t>(k - 1), db.end());
    const double rho = std::sqrt(da[k - 1]);
    const double nu = std::sqrt(db[k - 1]);
    if (rho == 0.0 || nu == 0.0) fail(ErrorKind::kNumerical, "kNN estimator hit duplicate samples");
    terms[i] = std::log(nu / rho);
  });
  double acc = 0.0;
  for (double t : terms) acc += t;
  return d / static_cast<double>(n) * acc + std::log(static_cast<double>(m) / static_cast<double>(n - 1));
}

double kl_between_sample_sets(const Tensor& a, const Tensor& b, KlEstimator estimator) {
  return estimator == KlEstimator::kGaussianFit ? kl_gaussian_fit(a, b) : kl_knn(a, b);
}

double c_hat(const WalkParams& walk) {
  if (walk.temp.empty()) fail(ErrorKind::kConfig, "empty walk parameters");
  const double dt = 1.0 / static_cast<double>(walk.temp.size());
  double c = 0.0;
  for (double temp : walk.temp) {
    if (!(temp > 0.0)) fail(ErrorKind::kConfig, "temperatures must be positive");
    c += dt / (4.0 * temp);
  }
  return c;
}

double VarianceTable::max_over_t(std::size_t w) const {
  double v = 0.0;
  for (const auto& r : rows) {
    if (r.w == w) v = std::max(v, r.v2_over_w);
  }
  return v;
}

double VarianceTable::mean_over_t(std::size_t w) const {
  double v = 0.0;
  std::size_t count = 0;
  for (const auto& r : rows) {
    if (r.w == w) {
      v += r.v2_over_w;
      ++count;
    }
  }
  return count ? v / static_cast<double>(count) : 0.0;
}

std::string VarianceTable::csv() const {
  std::string out = "t,sigma,w,v2_over_w\n";
  for (const auto& r : rows) {
    out += std::to_string(r.t) + "," + format_double(r.sigma) + "," + std::to_string(r.w) + "," + format_double(r.v2_over_w) + "\n";
  }
  return out;
}

VarianceTable estimate_variance_bound(const Denoiser& model, const MaskDistribution& dist, const GaussianOracle& prior,
                                      const NoiseSchedule& schedule, const std::vector<std::size_t>& ws,
                                      const std::vector<std::size_t>& steps, std::size_t probes, std::size_t draws,
                                      const Rng& rng) {
  if (probes == 0 || draws == 0 || ws.empty()) fail(ErrorKind::kConfig, "variance estimate needs probes, draws and w values");
  std::vector<std::size_t> ts = steps;
  if (ts.empty()) {
    for (std::size_t t = 1; t <= schedule.steps(); ++t) ts.push_back(t);
  }
  const Tensor weight = weight_from_coverage(dist.expected_coverage());
  // One task per (t, probe); each task owns its stream.
  std::vector<std::vector<double>> per_task(ts.size() * probes, std::vector<double>(ws.size(), 0.0));
  parallel_for(per_task.size(), [&](std::size_t task) {
    const std::size_t ti = task / probes;
    const double sigma = schedule.sigma(ts[ti]);
    Rng r = rng.split(task);
    const Tensor z = add_noise(prior.sample(r), sigma, r);
    Rng mc_rng = r.split(1);
    const Tensor exact = msm_score_exact(model, dist, z, sigma, dist.enumerable() ? 0 : 4096, &mc_rng, &weight);
    for (std::size_t wi = 0; wi < ws.size(); ++wi) {
      Rng draw_rng = r.split(100 + wi);
      double acc = 0.0;
      for (std::size_t d = 0; d < draws; ++d) {
        const Tensor est = msm_score_stochastic(model, dist, z, sigma, ws[wi], draw_rng, &weight).score;
        const Tensor diff = est - exact;
        acc += dot(diff, diff);
      }
      per_task[task][wi] = acc / static_cast<double>(draws);
    }
  });
  VarianceTable table;
  for (std::size_t ti = 0; ti < ts.size(); ++ti) {
    for (std::size_t wi = 0; wi < ws.size(); ++wi) {
      double v = 0.0;
      for (std::size_t p = 0; p < probes; ++p) v = std::max(v, per_task[ti * probes + p][wi]);
      table.rows.push_back({ts[ti], schedule.sigma(ts[ti]), ws[wi], v});
    }
  }
  return table;
}

bool KlStudyReport::bound_holds() const {
  for (const auto& r : rows) {
    if (!(r.kl_corrected <= r.bound)) return false;
  }
  return !rows.empty();
}

double KlStudyReport::ratio(std::size_t a, std::size_t b) const {
  double ka = std::numeric_limits<double>::quiet_NaN(), kb = ka;
  for (const auto& r : rows) {
    if (r.w == a) ka = r.kl_corrected;
    if (r.w == b) kb = r.kl_corrected;
  }
  return ka / kb;
}

std::string KlStudyReport::csv() const {
  std::string out = "w,kl,kl_corrected,bound,v2,C_hat,kl_fixed_weight,kl_fixed_weight_corrected\n";
  for (const auto& r : rows) {
    out += std::to_string(r.w) + "," + format_double(r.kl) + "," + format_double(r.kl_corrected) + "," +
           format_double(r.bound) + "," + format_double(r.v2_over_w * static_cast<double>(r.w)) + "," +
           format_double(c_hat) + "," + format_double(r.kl_fixed_weight) + "," + format_double(r.kl_fixed_weight_corrected) + "\n";
  }
  return out;
}

std::string KlStudyReport::summary() const {
  std::ostringstream out;
  out << "# KL study: discrete-step analogue of the stochastic-vs-exact score KL bound\n";
  out << "# (empirical check along the sampler actually used, not the continuous-time SDE)\n";
  out << "chains per set: " << chains << "\n";
  out << "estimator floor (reference vs independent reference): " << format_double(floor) << "\n";
  out << "C_hat: " << format_double(c_hat) << "\n";
  for (const auto& r : rows) {
    out << "w=" << r.w << "  KL=" << format_double(r.kl) << "  KL-floor=" << format_double(r.kl_corrected)
        << "  bound=" << format_double(r.bound) << (r.kl_corrected <= r.bound ? "  (holds)" : "  (violated)")
        << "  fixed-W walk KL-floor=" << format_double(r.kl_fixed_weight_corrected) << "\n";
  }
  out << "bound holds for all w: " << (bound_holds() ? "yes" : "no") << "\n";
  out << "KL(1)/KL(4) after floor: " << format_double(ratio(1, 4)) << "\n";
  return out.str();
}

KlStudyReport kl_study(const GaussianOracle& oracle, const MaskDistribution& dist, const KlStudyConfig& cfg,
                       const Rng& rng) {
  validate(cfg.sampler);
  if (cfg.ws.empty()) fail(ErrorKind::kConfig, "kl study needs w values");
  if (cfg.estimator == KlEstimator::kGaussianFit && cfg.chains < 500) {
    fail(ErrorKind::kConfig, "gaussian_fit KL needs at least 500 chains per set");
  }
  const std::size_t n = dist.n();
  if (oracle.measurement_size() != n) fail(ErrorKind::kShape, "oracle and mask distribution disagree on n");
  KlStudyReport report;
  report.chains = cfg.chains;
  report.c_hat = c_hat(WalkParams::from_schedule(cfg.sampler.schedule));
  SamplerConfig quiet = cfg.sampler;
  quiet.record_trace = false;
  auto reference = [&](const Rng& stream) {
    return sample_many(cfg.chains, stream, [&](Rng& r) { return sample_with_exact_score(oracle, dist, quiet, r); });
  };
  const Tensor ref = reference(rng.split(1));
  const Tensor ref2 = reference(rng.split(2));
  report.floor = kl_between_sample_sets(ref, ref2, cfg.estimator);
  report.variance = estimate_variance_bound(oracle, dist, oracle, cfg.sampler.schedule, cfg.ws, {}, cfg.variance_probes,
                                            cfg.variance_draws, rng.split(3));
  for (std::size_t wi = 0; wi < cfg.ws.size(); ++wi) {
    SamplerConfig sc = quiet;
    sc.w = cfg.ws[wi];
    const Tensor samples = sample_many(cfg.chains, rng.split(10 + wi),
                                       [&](Rng& r) { return sample_unconditional(oracle, dist, sc, r).z0; });
    KlStudyRow row;
    row.w = sc.w;
    row.kl = kl_between_sample_sets(ref, samples, cfg.estimator);
    row.kl_corrected = row.kl - report.floor;
    row.v2_over_w = report.variance.max_over_t(sc.w);
    row.bound = row.v2_over_w * report.c_hat;
    if (cfg.fixed_weight_walk) {
      const Tensor walk = sample_many(cfg.chains, rng.split(100 + wi), [&](Rng& r) {
        return sample_with_exact_score(oracle, dist, sc, r, ReferenceScore::kStochasticFixedWeight);
      });
      row.kl_fixed_weight = kl_between_sample_sets(ref, walk, cfg.estimator);
      row.kl_fixed_weight_corrected = row.kl_fixed_weight - report.floor;
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace msm
