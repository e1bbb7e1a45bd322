// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "msm/denoiser.hpp"
#include "msm/masks.hpp"
#include "msm/sampler.hpp"

namespace msm {

enum class ForwardKind { kBoxInpaint, kDownsampleBlur, kKspaceSubsample };

const char* to_string(ForwardKind kind);

/// Degradation H on the full measurement domain with noise level η.
class ForwardOp {
 public:
  /// Keeps the coordinates of `keep` (pixels outside the hidden boxes).
  static ForwardOp box_inpaint(MaskOp keep, double eta);
  /// Keeps the phase-encode lines of `keep` across coils.
  static ForwardOp kspace_subsample(MaskOp keep, double eta);
  /// Box blur of width `factor` followed by stride-`factor` decimation on
  /// [channels, height, width] images.
  static ForwardOp downsample_blur(std::size_t channels, std::size_t height, std::size_t width, std::size_t factor,
                                   double eta);

  ForwardKind kind() const noexcept { return kind_; }
  double eta() const noexcept { return eta_; }
  std::size_t input_size() const noexcept { return input_size_; }
  std::size_t output_size() const noexcept { return output_size_; }
  /// The kept-coordinate mask of the 0/1 kinds.
  const MaskOp& mask() const;

  Tensor apply(const Tensor& z) const;
  Tensor adjoint(const Tensor& y) const;
  /// y = H z + η e.
  Tensor measure(const Tensor& z, Rng& rng) const;

  std::string describe() const;

 private:
  ForwardKind kind_ = ForwardKind::kBoxInpaint;
  double eta_ = 0.0;
  std::size_t input_size_ = 0;
  std::size_t output_size_ = 0;
  MaskOp mask_;
  std::size_t channels_ = 0, height_ = 0, width_ = 0, factor_ = 1;
};

enum class GuidanceRule {
  /// γ · 2 Hᵀ(Hẑ − y): the gradient of γ‖y − Hẑ‖².
  kSquared,
  /// γ · Hᵀ(Hẑ − y) / ‖Hẑ − y‖: the gradient of γ‖y − Hẑ‖.
  kNorm,
};

enum class PosteriorMode { kGeneral, kPerMaskMri };

const char* to_string(GuidanceRule rule);
const char* to_string(PosteriorMode mode);
GuidanceRule parse_guidance_rule(const std::string& s);
PosteriorMode parse_posterior_mode(const std::string& s);

struct GuidanceConfig {
  double gamma = 1.0;
  GuidanceRule rule = GuidanceRule::kSquared;
  PosteriorMode mode = PosteriorMode::kGeneral;
};

/// γ · 2 Hᵀ(Hẑ − y), the gradient of γ‖y − Hẑ‖² with respect to ẑ.
Tensor likelihood_grad(const Tensor& y, const ForwardOp& h, const Tensor& z_hat, double gamma);
/// γ · Hᵀ(Hẑ − y)/‖Hẑ − y‖ (zero when the residual vanishes).
Tensor likelihood_grad_norm(const Tensor& y, const ForwardOp& h, const Tensor& z_hat, double gamma);

/// One per-mask guidance step on a partial estimate ŝ of mask S:
/// ŝ − γ·2·H̃ᵀ(H̃ŝ − ỹ) (squared rule) or its normalised counterpart.
Tensor guide_partial(const MaskOp& mask, const Tensor& s_hat, const Tensor& y, const ForwardOp& h,
                     const GuidanceConfig& gcfg);

/// Algorithm 1 with ẑ ← ẑ − guidance(ẑ) after aggregation.
Tensor reconstruct_general(const Denoiser& model, const MaskDistribution& dist, const Tensor& y, const ForwardOp& h,
                           const SamplerConfig& cfg, const GuidanceConfig& gcfg, Rng& rng);

/// Algorithm 1 with a guidance step on each partial estimate using
/// ỹ = S Hᵀ y and H̃ = S HᵀH Sᵀ.
Tensor reconstruct_per_mask_mri(const Denoiser& model, const MaskDistribution& dist, const Tensor& y,
                                const ForwardOp& h, const SamplerConfig& cfg, const GuidanceConfig& gcfg, Rng& rng);

/// Dispatches on gcfg.mode.
Tensor reconstruct(const Denoiser& model, const MaskDistribution& dist, const Tensor& y, const ForwardOp& h,
                   const SamplerConfig& cfg, const GuidanceConfig& gcfg, Rng& rng);

}  // namespace msm
