// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/msm.h"

#include <cstring>
#include <new>
#include <string>

#include "msm/commands.hpp"
#include "msm/denoiser.hpp"
#include "msm/masks.hpp"
#include "msm/metrics.hpp"
#include "msm/numerics.hpp"
#include "msm/theory.hpp"

struct msm_rng {
  msm::Rng rng;
};

struct msm_mask {
  msm::MaskOp op;
};

struct msm_mask_dist {
  msm::MaskDistribution dist;
};

struct msm_oracle {
  explicit msm_oracle(msm::Tensor mean, Eigen::MatrixXd cov) : oracle(std::move(mean), std::move(cov)) {}
  msm::GaussianOracle oracle;
};

namespace {

thread_local std::string g_last_error;

msm_status status_of(msm::ErrorKind kind) {
  switch (kind) {
    case msm::ErrorKind::kConfig: return MSM_E_CONFIG;
    case msm::ErrorKind::kShape: return MSM_E_SHAPE;
    case msm::ErrorKind::kUnsupportedSize: return MSM_E_UNSUPPORTED_SIZE;
    case msm::ErrorKind::kNumerical: return MSM_E_NUMERICAL;
    case msm::ErrorKind::kDegenerateNoise: return MSM_E_DEGENERATE_NOISE;
    case msm::ErrorKind::kContractViolation: return MSM_E_CONTRACT;
    case msm::ErrorKind::kCaseMismatch: return MSM_E_CASE_MISMATCH;
    case msm::ErrorKind::kFile: return MSM_E_FILE;
  }
  return MSM_E_INTERNAL;
}

msm_status invalid(const char* message) {
  g_last_error = message;
  return MSM_E_INVALID_ARGUMENT;
}

template <typename Fn>
msm_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MSM_OK;
  } catch (const msm::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MSM_E_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MSM_E_INTERNAL;
  }
}

void copy_out(const std::string& text, char* buf, size_t len) {
  if (!buf || len == 0) return;
  const size_t n = std::min(len - 1, text.size());
  std::memcpy(buf, text.data(), n);
  buf[n] = '\0';
}

msm::Tensor vec(const double* p, size_t n) { return msm::Tensor::vector(std::vector<double>(p, p + n)); }

void copy_to(const msm::Tensor& t, double* out) { std::memcpy(out, t.storage().data(), t.size() * sizeof(double)); }

}  // namespace

extern "C" {

const char* msm_version(void) { return "0.1.0"; }

const char* msm_last_error(void) { return g_last_error.c_str(); }

const char* msm_status_name(msm_status status) {
  switch (status) {
    case MSM_OK: return "ok";
    case MSM_E_CONFIG: return "ConfigError";
    case MSM_E_SHAPE: return "ShapeError";
    case MSM_E_UNSUPPORTED_SIZE: return "UnsupportedSize";
    case MSM_E_NUMERICAL: return "NumericalError";
    case MSM_E_DEGENERATE_NOISE: return "DegenerateNoise";
    case MSM_E_CONTRACT: return "ContractViolation";
    case MSM_E_CASE_MISMATCH: return "CaseMismatch";
    case MSM_E_FILE: return "FileError";
    case MSM_E_INVALID_ARGUMENT: return "InvalidArgument";
    case MSM_E_INTERNAL: return "InternalError";
  }
  return "unknown";
}

int msm_exit_code(msm_status status) {
  switch (status) {
    case MSM_OK: return 0;
    case MSM_E_CONFIG: return msm::exit_code(msm::ErrorKind::kConfig);
    case MSM_E_SHAPE: return msm::exit_code(msm::ErrorKind::kShape);
    case MSM_E_UNSUPPORTED_SIZE: return msm::exit_code(msm::ErrorKind::kUnsupportedSize);
    case MSM_E_NUMERICAL: return msm::exit_code(msm::ErrorKind::kNumerical);
    case MSM_E_DEGENERATE_NOISE: return msm::exit_code(msm::ErrorKind::kDegenerateNoise);
    case MSM_E_CONTRACT: return msm::exit_code(msm::ErrorKind::kContractViolation);
    case MSM_E_CASE_MISMATCH: return msm::exit_code(msm::ErrorKind::kCaseMismatch);
    case MSM_E_FILE: return msm::exit_code(msm::ErrorKind::kFile);
    case MSM_E_INVALID_ARGUMENT: return 2;
    case MSM_E_INTERNAL: return 1;
  }
  return 1;
}

size_t msm_command_count(void) { return msm::command_names().size(); }

const char* msm_command_name(size_t index) {
  const auto& names = msm::command_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

msm_status msm_run_command(const char* command, const char* config_path, const uint64_t* seed, const char* outdir,
                           char* run_dir, size_t run_dir_len, char* summary, size_t summary_len) {
  if (!command || !config_path || !outdir) return invalid("command, config path and output directory are required");
  return guarded([&] {
    std::optional<std::uint64_t> s;
    if (seed) s = *seed;
    const auto result = msm::run_command_file(command, config_path, s, outdir);
    copy_out(result.run_dir.string(), run_dir, run_dir_len);
    copy_out(result.summary, summary, summary_len);
  });
}

msm_status msm_rng_create(uint64_t seed, uint64_t stream, msm_rng** out) {
  if (!out) return invalid("null output handle");
  return guarded([&] { *out = new msm_rng{msm::Rng(seed, stream)}; });
}

msm_status msm_rng_split(const msm_rng* rng, uint64_t stream_id, msm_rng** out) {
  if (!rng || !out) return invalid("null handle");
  return guarded([&] { *out = new msm_rng{rng->rng.split(stream_id)}; });
}

msm_status msm_rng_gaussian(msm_rng* rng, double* out, size_t n) {
  if (!rng || (!out && n > 0)) return invalid("null argument");
  return guarded([&] {
    for (size_t i = 0; i < n; ++i) out[i] = rng->rng.gaussian();
  });
}

void msm_rng_destroy(msm_rng* rng) { delete rng; }

msm_status msm_mask_create(size_t n, const size_t* indices, size_t m, msm_mask** out) {
  if (!out || (!indices && m > 0)) return invalid("null argument");
  return guarded([&] { *out = new msm_mask{msm::MaskOp(n, std::vector<std::size_t>(indices, indices + m))}; });
}

msm_status msm_mask_sample(const msm_mask_dist* dist, msm_rng* rng, msm_mask** out) {
  if (!dist || !rng || !out) return invalid("null handle");
  return guarded([&] { *out = new msm_mask{dist->dist.sample(rng->rng)}; });
}

size_t msm_mask_n(const msm_mask* mask) { return mask ? mask->op.n() : 0; }

size_t msm_mask_m(const msm_mask* mask) { return mask ? mask->op.m() : 0; }

msm_status msm_mask_indices(const msm_mask* mask, size_t* out, size_t capacity) {
  if (!mask || (!out && capacity > 0)) return invalid("null argument");
  if (capacity < mask->op.m()) return invalid("index buffer too small");
  std::copy(mask->op.indices().begin(), mask->op.indices().end(), out);
  return MSM_OK;
}

msm_status msm_mask_apply(const msm_mask* mask, const double* z, size_t n, double* s, size_t m) {
  if (!mask || !z || !s) return invalid("null argument");
  return guarded([&] {
    if (n != mask->op.n() || m != mask->op.m()) msm::fail(msm::ErrorKind::kShape, "mask apply: buffer sizes do not match the mask");
    copy_to(mask->op.apply(vec(z, n)), s);
  });
}

msm_status msm_mask_adjoint(const msm_mask* mask, const double* s, size_t m, double* z, size_t n) {
  if (!mask || !s || !z) return invalid("null argument");
  return guarded([&] {
    if (n != mask->op.n() || m != mask->op.m()) msm::fail(msm::ErrorKind::kShape, "mask adjoint: buffer sizes do not match the mask");
    copy_to(mask->op.adjoint(vec(s, m)), z);
  });
}

void msm_mask_destroy(msm_mask* mask) { delete mask; }

msm_status msm_mask_dist_patch_box(size_t channels, size_t height, size_t width, size_t box_h, size_t box_w, double keep,
                                   msm_mask_dist** out) {
  if (!out) return invalid("null output handle");
  return guarded([&] {
    *out = new msm_mask_dist{msm::MaskDistribution::patch_box({channels, height, width, box_h, box_w, keep})};
  });
}

msm_status msm_mask_dist_kspace_lines(size_t coils, size_t lines, size_t readout, double acceleration, size_t autocal,
                                      int autocal_in_budget, msm_mask_dist** out) {
  if (!out) return invalid("null output handle");
  return guarded([&] {
    *out = new msm_mask_dist{
        msm::MaskDistribution::kspace_lines({coils, lines, readout, acceleration, autocal, autocal_in_budget != 0})};
  });
}

msm_status msm_mask_dist_uniform(size_t n, double keep, size_t group, msm_mask_dist** out) {
  if (!out) return invalid("null output handle");
  return guarded([&] { *out = new msm_mask_dist{msm::MaskDistribution::uniform_coords({n, keep, group})}; });
}

size_t msm_mask_dist_size(const msm_mask_dist* dist) { return dist ? dist->dist.n() : 0; }

msm_status msm_mask_dist_expected_coverage(const msm_mask_dist* dist, double* out, size_t n) {
  if (!dist || !out) return invalid("null argument");
  return guarded([&] {
    if (n != dist->dist.n()) msm::fail(msm::ErrorKind::kShape, "coverage buffer size does not match the distribution");
    copy_to(dist->dist.expected_coverage(), out);
  });
}

void msm_mask_dist_destroy(msm_mask_dist* dist) { delete dist; }

msm_status msm_oracle_create(const double* mean, const double* cov, size_t n, msm_oracle** out) {
  if (!mean || !cov || !out) return invalid("null argument");
  return guarded([&] {
    const auto dim = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd c = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(cov, dim, dim);
    *out = new msm_oracle(vec(mean, n), std::move(c));
  });
}

msm_status msm_oracle_denoise(const msm_oracle* oracle, const msm_mask* mask, const double* s_t, size_t m, double sigma,
                              double* out) {
  if (!oracle || !mask || !s_t || !out) return invalid("null argument");
  return guarded([&] {
    if (m != mask->op.m()) msm::fail(msm::ErrorKind::kShape, "oracle denoise: buffer size does not match the mask");
    copy_to(oracle->oracle.denoise(mask->op, vec(s_t, m), sigma), out);
  });
}

msm_status msm_oracle_score(const msm_oracle* oracle, const msm_mask* mask, const double* s_t, size_t m, double sigma,
                            double* out) {
  if (!oracle || !mask || !s_t || !out) return invalid("null argument");
  return guarded([&] {
    if (m != mask->op.m()) msm::fail(msm::ErrorKind::kShape, "oracle score: buffer size does not match the mask");
    copy_to(oracle->oracle.score(mask->op, vec(s_t, m), sigma), out);
  });
}

void msm_oracle_destroy(msm_oracle* oracle) { delete oracle; }

msm_status msm_dft2(const double* in, size_t height, size_t width, int inverse, double* out) {
  if (!in || !out) return invalid("null argument");
  return guarded([&] {
    msm::Tensor t({height, width, 2}, std::vector<double>(in, in + height * width * 2), true);
    copy_to(msm::dft2(t, inverse != 0), out);
  });
}

msm_status msm_psnr(const double* estimate, const double* reference, size_t n, double peak, double* out) {
  if (!estimate || !reference || !out) return invalid("null argument");
  return guarded([&] { *out = msm::psnr(vec(estimate, n), vec(reference, n), peak); });
}

msm_status msm_ssim(const double* estimate, const double* reference, size_t height, size_t width, double data_range,
                    double* out) {
  if (!estimate || !reference || !out) return invalid("null argument");
  return guarded([&] {
    *out = msm::ssim(vec(estimate, height * width), vec(reference, height * width), height, width, data_range);
  });
}

msm_status msm_kl_gaussian_fit(const double* a, size_t rows_a, const double* b, size_t rows_b, size_t dim, double* out) {
  if (!a || !b || !out) return invalid("null argument");
  return guarded([&] {
    msm::Tensor ta({rows_a, dim}, std::vector<double>(a, a + rows_a * dim));
    msm::Tensor tb({rows_b, dim}, std::vector<double>(b, b + rows_b * dim));
    *out = msm::kl_gaussian_fit(ta, tb);
  });
}

}  // extern "C"
