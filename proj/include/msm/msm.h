/* Copyright 2026 The MSM Lab Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface of libmsm. Every fallible call returns an msm_status; on
 * failure msm_last_error() describes the problem for the calling thread.
 * Handles are opaque and owned by the caller, who releases them with the
 * matching *_destroy function (null is accepted there).
 */
#ifndef MSM_MSM_H_
#define MSM_MSM_H_

#include <stddef.h>
#include <stdint.h>

#if defined(MSM_BUILDING_LIBRARY)
#define MSM_API __attribute__((visibility("default")))
#else
#define MSM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum msm_status {
  MSM_OK = 0,
  MSM_E_CONFIG = 1,
  MSM_E_SHAPE = 2,
  MSM_E_UNSUPPORTED_SIZE = 3,
  MSM_E_NUMERICAL = 4,
  MSM_E_DEGENERATE_NOISE = 5,
  MSM_E_CONTRACT = 6,
  MSM_E_CASE_MISMATCH = 7,
  MSM_E_FILE = 8,
  MSM_E_INVALID_ARGUMENT = 9,
  MSM_E_INTERNAL = 10
} msm_status;

typedef struct msm_rng msm_rng;
typedef struct msm_mask msm_mask;
typedef struct msm_mask_dist msm_mask_dist;
typedef struct msm_oracle msm_oracle;

MSM_API const char* msm_version(void);
/* Message of the last failed call on this thread ("" when none). */
MSM_API const char* msm_last_error(void);
MSM_API const char* msm_status_name(msm_status status);
/* Process exit code for a status: 0 ok, 2 config, 3 numeric, 4 missing file. */
MSM_API int msm_exit_code(msm_status status);

/* ---- commands ---- */

MSM_API size_t msm_command_count(void);
MSM_API const char* msm_command_name(size_t index);
/* Runs a command from a JSON config file. `seed` may be null to use the
 * config's seed. The run directory and a one-line summary are copied into the
 * optional buffers (truncated, always NUL-terminated). */
MSM_API msm_status msm_run_command(const char* command, const char* config_path, const uint64_t* seed,
                                   const char* outdir, char* run_dir, size_t run_dir_len, char* summary,
                                   size_t summary_len);

/* ---- random streams ---- */

MSM_API msm_status msm_rng_create(uint64_t seed, uint64_t stream, msm_rng** out);
MSM_API msm_status msm_rng_split(const msm_rng* rng, uint64_t stream_id, msm_rng** out);
MSM_API msm_status msm_rng_gaussian(msm_rng* rng, double* out, size_t n);
MSM_API void msm_rng_destroy(msm_rng* rng);

/* ---- masks ---- */

MSM_API msm_status msm_mask_create(size_t n, const size_t* indices, size_t m, msm_mask** out);
MSM_API msm_status msm_mask_sample(const msm_mask_dist* dist, msm_rng* rng, msm_mask** out);
MSM_API size_t msm_mask_n(const msm_mask* mask);
MSM_API size_t msm_mask_m(const msm_mask* mask);
MSM_API msm_status msm_mask_indices(const msm_mask* mask, size_t* out, size_t capacity);
/* s = S z with z of length n and s of length m. */
MSM_API msm_status msm_mask_apply(const msm_mask* mask, const double* z, size_t n, double* s, size_t m);
/* z = Sᵀ s (zero fill). */
MSM_API msm_status msm_mask_adjoint(const msm_mask* mask, const double* s, size_t m, double* z, size_t n);
MSM_API void msm_mask_destroy(msm_mask* mask);

MSM_API msm_status msm_mask_dist_patch_box(size_t channels, size_t height, size_t width, size_t box_h, size_t box_w,
                                           double keep, msm_mask_dist** out);
MSM_API msm_status msm_mask_dist_kspace_lines(size_t coils, size_t lines, size_t readout, double acceleration,
                                              size_t autocal, int autocal_in_budget, msm_mask_dist** out);
MSM_API msm_status msm_mask_dist_uniform(size_t n, double keep, size_t group, msm_mask_dist** out);
MSM_API size_t msm_mask_dist_size(const msm_mask_dist* dist);
/* Exact E[diag(SᵀS)] into out[0..n). */
MSM_API msm_status msm_mask_dist_expected_coverage(const msm_mask_dist* dist, double* out, size_t n);
MSM_API void msm_mask_dist_destroy(msm_mask_dist* dist);

/* ---- Gaussian oracle denoiser ---- */

/* Prior N(mean, cov) with cov row-major n×n. */
MSM_API msm_status msm_oracle_create(const double* mean, const double* cov, size_t n, msm_oracle** out);
MSM_API msm_status msm_oracle_denoise(const msm_oracle* oracle, const msm_mask* mask, const double* s_t, size_t m,
                                      double sigma, double* out);
MSM_API msm_status msm_oracle_score(const msm_oracle* oracle, const msm_mask* mask, const double* s_t, size_t m,
                                    double sigma, double* out);
MSM_API void msm_oracle_destroy(msm_oracle* oracle);

/* ---- numerics and metrics ---- */

/* Unitary 2-D DFT of interleaved complex data [height, width, 2]. */
MSM_API msm_status msm_dft2(const double* in, size_t height, size_t width, int inverse, double* out);
MSM_API msm_status msm_psnr(const double* estimate, const double* reference, size_t n, double peak, double* out);
MSM_API msm_status msm_ssim(const double* estimate, const double* reference, size_t height, size_t width,
                            double data_range, double* out);
/* KL between Gaussian fits of the rows of a (rows_a × dim) and b. */
MSM_API msm_status msm_kl_gaussian_fit(const double* a, size_t rows_a, const double* b, size_t rows_b, size_t dim,
                                       double* out);

#ifdef __cplusplus
}
#endif

#endif /* MSM_MSM_H_ */
