// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/denoiser.hpp"

#include <bit>
#include <cmath>

#include "msm/errors.hpp"

namespace msm {

std::unique_ptr<ForwardPass> Denoiser::forward(const std::vector<Query>& queries, std::vector<Tensor>& outputs) const {
  outputs.clear();
  outputs.reserve(queries.size());
  for (const auto& q : queries) outputs.push_back(denoise(*q.mask, q.s_t, q.sigma));
  return nullptr;
}

void Denoiser::backward(const ForwardPass*, const std::vector<Tensor>&, std::span<double>) const {}

// ---------------------------------------------------------------------------

namespace {

// Bound on cached gain entries (in doubles) before the cache is flushed.
constexpr std::size_t kGainCacheBudget = std::size_t{1} << 23;
// Larger masks are solved directly; their gains rarely repeat.
constexpr std::size_t kGainCacheMaxM = 96;

Eigen::VectorXd to_eigen(const Tensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.values().data(), static_cast<Eigen::Index>(t.size()));
}

Tensor from_eigen(const Eigen::VectorXd& v) {
  return Tensor::vector(std::vector<double>(v.data(), v.data() + v.size()));
}

void check_query(const MaskOp& mask, const Tensor& s_t, double sigma, std::size_t n) {
  if (mask.n() != n) fail(ErrorKind::kShape, "mask dimension " + std::to_string(mask.n()) + " does not match denoiser dimension " + std::to_string(n));
  if (s_t.size() != mask.m()) fail(ErrorKind::kShape, "denoiser input has " + std::to_string(s_t.size()) + " entries for a mask keeping " + std::to_string(mask.m()));
  if (!(sigma > 0.0)) fail(ErrorKind::kDegenerateNoise, "denoiser needs sigma > 0");
}

}  // namespace

GaussianOracle::GaussianOracle(Tensor mean, Eigen::MatrixXd covariance) : mean_(std::move(mean)), cov_(std::move(covariance)) {
  const auto n = static_cast<Eigen::Index>(mean_.size());
  if (cov_.rows() != n || cov_.cols() != n) fail(ErrorKind::kShape, "oracle covariance must be n x n");
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, cov_.cwiseAbs().maxCoeff())) {
    fail(ErrorKind::kConfig, "oracle covariance must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_);
  if (eig.info() != Eigen::Success) fail(ErrorKind::kNumerical, "oracle covariance eigendecomposition failed");
  const double tol = -1e-9 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < tol) fail(ErrorKind::kConfig, "oracle covariance must be positive semidefinite");
  chol_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

std::shared_ptr<const GaussianOracle::Gain> GaussianOracle::gain(const MaskOp& mask, double sigma) const {
  auto key = std::make_pair(mask.indices(), sigma);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  const auto& idx = mask.indices();
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd sub(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) sub(i, j) = cov_(static_cast<Eigen::Index>(idx[i]), static_cast<Eigen::Index>(idx[j]));
  }
  Eigen::MatrixXd a = sub;
  a.diagonal().array() += sigma * sigma;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) fail(ErrorKind::kNumerical, "oracle solve failed (Σ_S + σ²I not positive definite)");
  auto g = std::make_shared<Gain>();
  g->precision = llt.solve(Eigen::MatrixXd::Identity(m, m));
  g->gain = sub * g->precision;
  std::lock_guard lock(mutex_);
  const auto entries = static_cast<std::size_t>(2 * m * m);
  if (cached_entries_ + entries > kGainCacheBudget) {
    cache_.clear();
    cached_entries_ = 0;
  }
  cached_entries_ += entries;
  cache_.emplace(std::move(key), g);
  return g;
}

Eigen::VectorXd GaussianOracle::solve(const MaskOp& mask, double sigma, const Eigen::VectorXd& r) const {
  const auto& idx = mask.indices();
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd a(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) a(i, j) = cov_(static_cast<Eigen::Index>(idx[i]), static_cast<Eigen::Index>(idx[j]));
  }
  a.diagonal().array() += sigma * sigma;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) fail(ErrorKind::kNumerical, "oracle solve failed (Σ_S + σ²I not positive definite)");
  return llt.solve(r);
}

Tensor GaussianOracle::denoise(const MaskOp& mask, const Tensor& s_t, double sigma) const {
  check_query(mask, s_t, sigma, measurement_size());
  const Eigen::VectorXd mu = to_eigen(mask.apply(mean_));
  const Eigen::VectorXd r = to_eigen(s_t) - mu;
  if (mask.m() > kGainCacheMaxM) {
    // Σ_S (Σ_S + σ²I)⁻¹ r = r − σ² (Σ_S + σ²I)⁻¹ r
    return from_eigen(mu + r - sigma * sigma * solve(mask, sigma, r));
  }
  return from_eigen(mu + gain(mask, sigma)->gain * r);
}

Tensor GaussianOracle::score(const MaskOp& mask, const Tensor& s_t, double sigma) const {
  check_query(mask, s_t, sigma, measurement_size());
  const Eigen::VectorXd mu = to_eigen(mask.apply(mean_));
  const Eigen::VectorXd r = to_eigen(s_t) - mu;
  if (mask.m() > kGainCacheMaxM) return from_eigen(-solve(mask, sigma, r));
  return from_eigen(-(gain(mask, sigma)->precision * r));
}

Tensor GaussianOracle::sample(Rng& rng) const {
  const Eigen::VectorXd e = to_eigen(gaussian(rng, {mean_.size()}));
  return from_eigen(to_eigen(mean_) + chol_ * e);
}

// ---------------------------------------------------------------------------

namespace {

struct Precond {
  double c_skip, c_out, c_in, c_noise;
};

Precond precondition(double sigma, double sigma_data) {
  const double s2 = sigma * sigma;
  const double d2 = sigma_data * sigma_data;
  return {d2 / (s2 + d2), sigma * sigma_data / std::sqrt(s2 + d2), 1.0 / std::sqrt(s2 + d2), std::log(sigma) / 4.0};
}

struct MlpPass : ForwardPass {
  Mlp::Tape tape;
  std::vector<MaskOp> masks;
  std::vector<double> c_out;
};

}  // namespace

std::size_t MlpDenoiser::input_width(const Transform& transform) {
  return transform.image_size() + transform.measurement_size() + 1;
}

MlpDenoiser::MlpDenoiser(Transform transform, MlpDenoiserArch arch, Rng& rng)
    : transform_(std::move(transform)), arch_(std::move(arch)) {
  if (!(arch_.sigma_data > 0.0)) fail(ErrorKind::kConfig, "sigma_data must be positive");
  std::vector<std::size_t> widths{input_width(transform_)};
  widths.insert(widths.end(), arch_.hidden.begin(), arch_.hidden.end());
  widths.push_back(transform_.image_size());
  net_ = Mlp(widths, rng);
}

MlpDenoiser::MlpDenoiser(Transform transform, MlpDenoiserArch arch, Mlp net)
    : transform_(std::move(transform)), arch_(std::move(arch)), net_(std::move(net)) {
  if (net_.input_size() != input_width(transform_) || net_.output_size() != transform_.image_size()) {
    fail(ErrorKind::kShape, "network widths do not match the transform");
  }
}

Tensor MlpDenoiser::denoise(const MaskOp& mask, const Tensor& s_t, double sigma) const {
  std::vector<Tensor> out;
  forward({Query{&mask, s_t, sigma}}, out);
  return std::move(out.front());
}

std::unique_ptr<ForwardPass> MlpDenoiser::forward(const std::vector<Query>& queries, std::vector<Tensor>& outputs) const {
  const std::size_t n = transform_.measurement_size();
  const std::size_t p = transform_.image_size();
  const auto batch = static_cast<Eigen::Index>(queries.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(input_width(transform_)), batch);
  std::vector<Tensor> backprojected;
  std::vector<Precond> pre;
  backprojected.reserve(queries.size());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Query& q = queries[static_cast<std::size_t>(b)];
    check_query(*q.mask, q.s_t, q.sigma, n);
    pre.push_back(precondition(q.sigma, arch_.sigma_data));
    backprojected.push_back(transform_.inverse(q.mask->adjoint(q.s_t)));
    const Tensor& u = backprojected.back();
    for (std::size_t i = 0; i < p; ++i) x(static_cast<Eigen::Index>(i), b) = pre.back().c_in * u[i];
    for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(p + i), b) = 0.0;
    for (std::size_t i : q.mask->indices()) x(static_cast<Eigen::Index>(p + i), b) = 1.0;
    x(static_cast<Eigen::Index>(p + n), b) = pre.back().c_noise;
  }
  auto pass = std::make_unique<MlpPass>();
  const Eigen::MatrixXd out = net_.forward(x, &pass->tape);
  outputs.clear();
  outputs.reserve(queries.size());
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Precond& c = pre[static_cast<std::size_t>(b)];
    Tensor img = backprojected[static_cast<std::size_t>(b)];
    for (std::size_t i = 0; i < p; ++i) img[i] = c.c_skip * img[i] + c.c_out * out(static_cast<Eigen::Index>(i), b);
    outputs.push_back(queries[static_cast<std::size_t>(b)].mask->apply(transform_.forward(img)));
    pass->masks.push_back(*queries[static_cast<std::size_t>(b)].mask);
    pass->c_out.push_back(c.c_out);
  }
  return pass;
}

void MlpDenoiser::backward(const ForwardPass* pass, const std::vector<Tensor>& d_outputs, std::span<double> grad) const {
  const auto* mp = dynamic_cast<const MlpPass*>(pass);
  if (!mp) fail(ErrorKind::kContractViolation, "backward needs a pass produced by this network's forward");
  if (d_outputs.size() != mp->masks.size()) fail(ErrorKind::kShape, "one output gradient per query required");
  const std::size_t p = transform_.image_size();
  Eigen::MatrixXd d_out(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(d_outputs.size()));
  for (std::size_t b = 0; b < d_outputs.size(); ++b) {
    const Tensor d_img = transform_.inverse(mp->masks[b].adjoint(d_outputs[b]));
    for (std::size_t i = 0; i < p; ++i) d_out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = mp->c_out[b] * d_img[i];
  }
  net_.backward(mp->tape, d_out, grad);
}

Tensor IdentityDenoiser::denoise(const MaskOp& mask, const Tensor& s_t, double sigma) const {
  check_query(mask, s_t, sigma, n_);
  return s_t;
}

}  // namespace msm
