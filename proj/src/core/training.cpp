// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/training.hpp"

#include <cmath>
#include <numeric>

#include "msm/errors.hpp"

namespace msm {

double LossBreakdown::mean() const {
  if (total.empty()) return 0.0;
  return std::accumulate(total.begin(), total.end(), 0.0) / static_cast<double>(total.size());
}

double sure_delta(double rho, const SureOptions& opts) {
  return opts.delta > 0.0 ? opts.delta : std::max(1e-3, rho * 1e-2);
}

namespace {

void check_batch(const Denoiser& model, const std::vector<TrainSample>& batch, const std::vector<double>* sigma) {
  if (sigma && sigma->size() != batch.size()) fail(ErrorKind::kShape, "one noise level per batch element required");
  for (const auto& b : batch) {
    if (b.mask.n() != model.measurement_size()) fail(ErrorKind::kShape, "training mask does not match the model dimension");
    if (b.s.size() != b.mask.m()) fail(ErrorKind::kShape, "training measurement length does not match its mask");
  }
}

double sq_dist(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

LossBreakdown empty_breakdown(std::size_t n) {
  return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
}

// Adds the SURE term at level rho into `out` (sure and total) and its
// gradient into the sink.
void add_sure(const Denoiser& model, const std::vector<TrainSample>& batch, double rho, const SureOptions& opts, Rng& rng,
              GradSink sink, LossBreakdown& out) {
  if (!(rho > 0.0)) fail(ErrorKind::kConfig, "SURE needs rho > 0");
  if (opts.probes == 0) fail(ErrorKind::kConfig, "SURE needs at least one probe");
  const double delta = sure_delta(rho, opts);
  const std::size_t probes = opts.probes;
  std::vector<Query> queries;
  std::vector<Tensor> eps;
  queries.reserve(batch.size() * (probes + 1));
  for (const auto& b : batch) {
    queries.push_back({&b.mask, b.s, rho});
    for (std::size_t p = 0; p < probes; ++p) {
      eps.push_back(rademacher(rng, {b.s.size()}));
      Tensor shifted = b.s;
      for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += delta * eps.back()[i];
      queries.push_back({&b.mask, std::move(shifted), rho});
    }
  }
  std::vector<Tensor> outs;
  auto pass = model.forward(queries, outs);
  std::vector<Tensor> d_outs;
  if (sink.active()) d_outs.reserve(outs.size());
  const double rho2 = rho * rho;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const Tensor& s = batch[e].s;
    const double m = static_cast<double>(s.size());
    const Tensor& base = outs[e * (probes + 1)];
    double div = 0.0;
    for (std::size_t p = 0; p < probes; ++p) {
      const Tensor& pert = outs[e * (probes + 1) + 1 + p];
      const Tensor& ep = eps[e * probes + p];
      for (std::size_t i = 0; i < s.size(); ++i) div += ep[i] * (pert[i] - base[i]);
    }
    div /= delta * static_cast<double>(probes);
    const double value = sq_dist(s, base) / m - rho2 + 2.0 * rho2 / m * div;
    out.sure[e] += value;
    out.total[e] += value;
    if (sink.active()) {
      const double probe_coeff = sink.scale * 2.0 * rho2 / (m * delta * static_cast<double>(probes));
      Tensor d_base = base;
      for (std::size_t i = 0; i < s.size(); ++i) d_base[i] = sink.scale * (-2.0 * (s[i] - base[i]) / m);
      std::vector<Tensor> d_probe;
      for (std::size_t p = 0; p < probes; ++p) {
        const Tensor& ep = eps[e * probes + p];
        Tensor d = ep;
        for (std::size_t i = 0; i < s.size(); ++i) {
          d[i] = probe_coeff * ep[i];
          d_base[i] -= probe_coeff * ep[i];
        }
        d_probe.push_back(std::move(d));
      }
      d_outs.push_back(std::move(d_base));
      for (auto& d : d_probe) d_outs.push_back(std::move(d));
    }
  }
  if (sink.active()) model.backward(pass.get(), d_outs, sink.grad);
}

}  // namespace

LossBreakdown loss_clean(const Denoiser& model, const std::vector<TrainSample>& batch, const std::vector<double>& sigma,
                         Rng& rng, GradSink sink) {
  check_batch(model, batch, &sigma);
  std::vector<Query> queries;
  for (std::size_t e = 0; e < batch.size(); ++e) queries.push_back({&batch[e].mask, add_noise(batch[e].s, sigma[e], rng), sigma[e]});
  std::vector<Tensor> outs;
  auto pass = model.forward(queries, outs);
  LossBreakdown out = empty_breakdown(batch.size());
  std::vector<Tensor> d_outs;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const Tensor& s = batch[e].s;
    const double m = static_cast<double>(s.size());
    out.diffusion[e] = sq_dist(s, outs[e]) / m;
    out.total[e] = out.diffusion[e];
    if (sink.active()) {
      Tensor d = outs[e];
      for (std::size_t i = 0; i < s.size(); ++i) d[i] = sink.scale * 2.0 * (outs[e][i] - s[i]) / m;
      d_outs.push_back(std::move(d));
    }
  }
  if (sink.active()) model.backward(pass.get(), d_outs, sink.grad);
  return out;
}

LossBreakdown loss_case1(const Denoiser& model, const std::vector<TrainSample>& batch, const std::vector<double>& sigma,
                         double rho, const SureOptions& sure, Rng& rng, GradSink sink) {
  check_batch(model, batch, &sigma);
  for (double s : sigma) {
    if (!(s > rho)) fail(ErrorKind::kCaseMismatch, "case 1 needs sigma > rho (sigma=" + format_double(s) + ", rho=" + format_double(rho) + ")");
  }
  std::vector<Query> queries;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const double extra = std::sqrt(sigma[e] * sigma[e] - rho * rho);
    queries.push_back({&batch[e].mask, add_noise(batch[e].s, extra, rng), sigma[e]});
  }
  std::vector<Tensor> outs;
  auto pass = model.forward(queries, outs);
  LossBreakdown out = empty_breakdown(batch.size());
  std::vector<Tensor> d_outs;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const Tensor& s = batch[e].s;
    const Tensor& s_t = queries[e].s_t;
    const double m = static_cast<double>(s.size());
    const double k = (sigma[e] * sigma[e] - rho * rho) / (sigma[e] * sigma[e]);
    Tensor resid = s;
    for (std::size_t i = 0; i < s.size(); ++i) resid[i] = s[i] - (k * (outs[e][i] - s_t[i]) + s_t[i]);
    out.diffusion[e] = dot(resid, resid) / m;
    out.total[e] = out.diffusion[e];
    if (sink.active()) {
      for (std::size_t i = 0; i < s.size(); ++i) resid[i] *= -2.0 * k * sink.scale / m;
      d_outs.push_back(std::move(resid));
    }
  }
  if (sink.active()) model.backward(pass.get(), d_outs, sink.grad);
  add_sure(model, batch, rho, sure, rng, sink, out);
  return out;
}

LossBreakdown loss_case2(const Denoiser& model, const std::vector<TrainSample>& batch, const std::vector<double>& sigma,
                         double rho, const SureOptions& sure, Rng& rng, GradSink sink, const Denoiser* reference) {
  check_batch(model, batch, &sigma);
  if (!(rho > 0.0)) fail(ErrorKind::kCaseMismatch, "case 2 needs rho > 0");
  for (double s : sigma) {
    if (!(s > 0.0 && s <= rho)) fail(ErrorKind::kCaseMismatch, "case 2 needs 0 < sigma <= rho (sigma=" + format_double(s) + ", rho=" + format_double(rho) + ")");
  }
  const Denoiser& ref = reference ? *reference : model;
  // Pseudo-clean targets: evaluated without a tape, so no gradient flows.
  std::vector<Query> ref_queries;
  for (const auto& b : batch) ref_queries.push_back({&b.mask, b.s, rho});
  std::vector<Tensor> pseudo;
  ref.forward(ref_queries, pseudo);
  std::vector<Query> queries;
  for (std::size_t e = 0; e < batch.size(); ++e) queries.push_back({&batch[e].mask, add_noise(pseudo[e], sigma[e], rng), sigma[e]});
  std::vector<Tensor> outs;
  auto pass = model.forward(queries, outs);
  LossBreakdown out = empty_breakdown(batch.size());
  std::vector<Tensor> d_outs;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const double m = static_cast<double>(pseudo[e].size());
    out.diffusion[e] = sq_dist(pseudo[e], outs[e]) / m;
    out.total[e] = out.diffusion[e];
    if (sink.active()) {
      Tensor d = outs[e];
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = sink.scale * 2.0 * (outs[e][i] - pseudo[e][i]) / m;
      d_outs.push_back(std::move(d));
    }
  }
  if (sink.active()) model.backward(pass.get(), d_outs, sink.grad);
  add_sure(model, batch, rho, sure, rng, sink, out);
  return out;
}

LossBreakdown loss_sure(const Denoiser& model, const std::vector<TrainSample>& batch, double rho,
                        const SureOptions& sure, Rng& rng, GradSink sink) {
  check_batch(model, batch, nullptr);
  LossBreakdown out = empty_breakdown(batch.size());
  add_sure(model, batch, rho, sure, rng, sink, out);
  return out;
}

double sure_divergence(const Denoiser& model, const MaskOp& mask, const Tensor& s, double sigma, std::size_t probes,
                       double delta, Rng& rng) {
  if (probes == 0 || !(delta > 0.0)) fail(ErrorKind::kConfig, "divergence needs probes >= 1 and delta > 0");
  const Tensor base = model.denoise(mask, s, sigma);
  double div = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    const Tensor eps = rademacher(rng, {s.size()});
    Tensor shifted = s;
    for (std::size_t i = 0; i < s.size(); ++i) shifted[i] += delta * eps[i];
    const Tensor pert = model.denoise(mask, shifted, sigma);
    for (std::size_t i = 0; i < s.size(); ++i) div += eps[i] * (pert[i] - base[i]);
  }
  return div / (delta * static_cast<double>(probes));
}

void validate(const TrainConfig& cfg) {
  if (cfg.batch == 0) fail(ErrorKind::kConfig, "batch size must be positive");
  if (!(cfg.rho >= 0.0)) fail(ErrorKind::kConfig, "rho must be nonnegative");
  if (cfg.mode == LossMode::kNoisy && !(cfg.rho > 0.0)) fail(ErrorKind::kCaseMismatch, "noisy training needs rho > 0");
  if (cfg.mode == LossMode::kNoisy && cfg.sure.probes == 0) fail(ErrorKind::kConfig, "noisy training needs at least one SURE probe");
  if (cfg.ema && !(cfg.ema_decay >= 0.0 && cfg.ema_decay < 1.0)) fail(ErrorKind::kConfig, "EMA decay must lie in [0, 1)");
}

const char* to_string(CaseTag tag) {
  switch (tag) {
    case CaseTag::kClean: return "clean";
    case CaseTag::kCase1: return "case1";
    case CaseTag::kCase2: return "case2";
    case CaseTag::kMixed: return "mixed";
  }
  return "unknown";
}

CaseTag dispatch_case(double sigma, double rho) { return sigma > rho ? CaseTag::kCase1 : CaseTag::kCase2; }

std::vector<LossRecord> train(MlpDenoiser& model, const std::vector<TrainSample>& data, const NoiseSchedule& schedule,
                              const TrainConfig& cfg, TrainState& state, const Rng& rng) {
  validate(cfg);
  if (data.empty()) fail(ErrorKind::kConfig, "training needs a nonempty dataset");
  check_batch(model, data, nullptr);
  Mlp& net = model.net();
  if (!state.optimizer) state.optimizer = AdamW(cfg.adam, net.parameter_count());
  state.optimizer->set_lr(cfg.adam.lr);
  if (cfg.ema && !state.ema) state.ema = Ema(cfg.ema_decay, net.parameters());
  std::vector<LossRecord> records;
  std::vector<double> grad(net.parameter_count());
  for (std::size_t step = 0; step < cfg.iterations; ++step) {
    const std::size_t iter = state.iteration + 1;
    Rng r = rng.split(iter);
    std::vector<TrainSample> batch;
    std::vector<double> sigma;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      batch.push_back(data[r.uniform_index(data.size())]);
      sigma.push_back(schedule.sigma(1 + r.uniform_index(schedule.steps())));
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    const GradSink sink{grad, 1.0 / static_cast<double>(cfg.batch)};
    double total = 0.0;
    CaseTag tag = CaseTag::kClean;
    if (cfg.mode == LossMode::kClean) {
      total = loss_clean(model, batch, sigma, r, sink).mean() * static_cast<double>(batch.size());
    } else {
      std::vector<TrainSample> split[2];
      std::vector<double> split_sigma[2];
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const int c = dispatch_case(sigma[b], cfg.rho) == CaseTag::kCase1 ? 0 : 1;
        split[c].push_back(std::move(batch[b]));
        split_sigma[c].push_back(sigma[b]);
      }
      if (!split[0].empty()) {
        const auto l = loss_case1(model, split[0], split_sigma[0], cfg.rho, cfg.sure, r, sink);
        total += l.mean() * static_cast<double>(split[0].size());
      }
      if (!split[1].empty()) {
        const auto l = loss_case2(model, split[1], split_sigma[1], cfg.rho, cfg.sure, r, sink);
        total += l.mean() * static_cast<double>(split[1].size());
      }
      tag = split[1].empty() ? CaseTag::kCase1 : (split[0].empty() ? CaseTag::kCase2 : CaseTag::kMixed);
    }
    const double loss = total / static_cast<double>(cfg.batch);
    bool finite = std::isfinite(loss);
    for (double g : grad) finite = finite && std::isfinite(g);
    if (!finite) {
      fail(ErrorKind::kNumerical, "non-finite loss at iteration " + std::to_string(iter) + " (case " + to_string(tag) +
                                      ", loss " + format_double(loss) + ", lr " + format_double(cfg.adam.lr) + ")");
    }
    state.optimizer->step(net.mutable_parameters(), grad);
    net.touch();
    if (state.ema) state.ema->update(net.parameters());
    state.iteration = iter;
    records.push_back({iter, loss, tag});
  }
  return records;
}

std::string loss_csv(const std::vector<LossRecord>& records) {
  std::string out = "iter,loss,case_tag\n";
  for (const auto& r : records) out += std::to_string(r.iteration) + "," + format_double(r.loss) + "," + to_string(r.tag) + "\n";
  return out;
}

}  // namespace msm
