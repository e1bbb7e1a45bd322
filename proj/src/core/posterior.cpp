// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/posterior.hpp"

#include <cmath>
#include <sstream>

#include "msm/errors.hpp"

namespace msm {

const char* to_string(ForwardKind kind) {
  switch (kind) {
    case ForwardKind::kBoxInpaint: return "box_inpaint";
    case ForwardKind::kDownsampleBlur: return "downsample_blur";
    case ForwardKind::kKspaceSubsample: return "kspace_subsample";
  }
  return "unknown";
}

ForwardOp ForwardOp::box_inpaint(MaskOp keep, double eta) {
  if (!(eta >= 0.0)) fail(ErrorKind::kConfig, "eta must be nonnegative");
  ForwardOp h;
  h.kind_ = ForwardKind::kBoxInpaint;
  h.eta_ = eta;
  h.input_size_ = keep.n();
  h.output_size_ = keep.m();
  h.mask_ = std::move(keep);
  return h;
}

ForwardOp ForwardOp::kspace_subsample(MaskOp keep, double eta) {
  ForwardOp h = box_inpaint(std::move(keep), eta);
  h.kind_ = ForwardKind::kKspaceSubsample;
  return h;
}

ForwardOp ForwardOp::downsample_blur(std::size_t channels, std::size_t height, std::size_t width, std::size_t factor,
                                     double eta) {
  if (!(eta >= 0.0)) fail(ErrorKind::kConfig, "eta must be nonnegative");
  if (factor == 0 || channels == 0 || height % factor != 0 || width % factor != 0) {
    fail(ErrorKind::kConfig, "downsample factor must divide the image dims");
  }
  ForwardOp h;
  h.kind_ = ForwardKind::kDownsampleBlur;
  h.eta_ = eta;
  h.channels_ = channels;
  h.height_ = height;
  h.width_ = width;
  h.factor_ = factor;
  h.input_size_ = channels * height * width;
  h.output_size_ = channels * (height / factor) * (width / factor);
  return h;
}

const MaskOp& ForwardOp::mask() const {
  if (kind_ == ForwardKind::kDownsampleBlur) fail(ErrorKind::kConfig, "downsample_blur has no coordinate mask");
  return mask_;
}

Tensor ForwardOp::apply(const Tensor& z) const {
  if (z.size() != input_size_) fail(ErrorKind::kShape, "forward operator input has wrong size");
  if (kind_ != ForwardKind::kDownsampleBlur) return mask_.apply(z);
  const std::size_t oh = height_ / factor_, ow = width_ / factor_;
  const double inv = 1.0 / static_cast<double>(factor_ * factor_);
  Tensor y = Tensor::zeros(output_size_);
  for (std::size_t c = 0; c < channels_; ++c) {
    for (std::size_t i = 0; i < height_; ++i) {
      for (std::size_t j = 0; j < width_; ++j) {
        y[(c * oh + i / factor_) * ow + j / factor_] += inv * z[(c * height_ + i) * width_ + j];
      }
    }
  }
  return y;
}

Tensor ForwardOp::adjoint(const Tensor& y) const {
  if (y.size() != output_size_) fail(ErrorKind::kShape, "forward operator adjoint input has wrong size");
  if (kind_ != ForwardKind::kDownsampleBlur) return mask_.adjoint(y);
  const std::size_t oh = height_ / factor_, ow = width_ / factor_;
  const double inv = 1.0 / static_cast<double>(factor_ * factor_);
  Tensor z = Tensor::zeros(input_size_);
  for (std::size_t c = 0; c < channels_; ++c) {
    for (std::size_t i = 0; i < height_; ++i) {
      for (std::size_t j = 0; j < width_; ++j) {
        z[(c * height_ + i) * width_ + j] = inv * y[(c * oh + i / factor_) * ow + j / factor_];
      }
    }
  }
  return z;
}

Tensor ForwardOp::measure(const Tensor& z, Rng& rng) const { return add_noise(apply(z), eta_, rng); }

std::string ForwardOp::describe() const {
  std::ostringstream out;
  out << to_string(kind_) << "(in=" << input_size_ << ", out=" << output_size_ << ", eta=" << eta_;
  if (kind_ == ForwardKind::kDownsampleBlur) out << ", factor=" << factor_;
  out << ")";
  return out.str();
}

const char* to_string(GuidanceRule rule) { return rule == GuidanceRule::kSquared ? "squared" : "norm"; }
const char* to_string(PosteriorMode mode) { return mode == PosteriorMode::kGeneral ? "general" : "per_mask_mri"; }

GuidanceRule parse_guidance_rule(const std::string& s) {
  if (s == "squared") return GuidanceRule::kSquared;
  if (s == "norm") return GuidanceRule::kNorm;
  fail(ErrorKind::kConfig, "unknown guidance rule '" + s + "' (squared|norm)");
}

PosteriorMode parse_posterior_mode(const std::string& s) {
  if (s == "general") return PosteriorMode::kGeneral;
  if (s == "per_mask_mri") return PosteriorMode::kPerMaskMri;
  fail(ErrorKind::kConfig, "unknown posterior mode '" + s + "' (general|per_mask_mri)");
}

Tensor likelihood_grad(const Tensor& y, const ForwardOp& h, const Tensor& z_hat, double gamma) {
  if (y.size() != h.output_size()) fail(ErrorKind::kShape, "measurement y has wrong size");
  return h.adjoint(h.apply(z_hat) - y) * (2.0 * gamma);
}

Tensor likelihood_grad_norm(const Tensor& y, const ForwardOp& h, const Tensor& z_hat, double gamma) {
  if (y.size() != h.output_size()) fail(ErrorKind::kShape, "measurement y has wrong size");
  const Tensor r = h.apply(z_hat) - y;
  const double norm = norm2(r);
  if (norm == 0.0) return Tensor::zeros(h.input_size());
  return h.adjoint(r) * (gamma / norm);
}

namespace {

void check_problem(const Denoiser& model, const MaskDistribution& dist, const Tensor& y, const ForwardOp& h,
                   const GuidanceConfig& gcfg) {
  if (!(gcfg.gamma >= 0.0)) fail(ErrorKind::kConfig, "gamma must be nonnegative");
  if (h.input_size() != dist.n() || model.measurement_size() != dist.n()) {
    fail(ErrorKind::kShape, "forward operator, denoiser and mask distribution disagree on n");
  }
  if (y.size() != h.output_size()) fail(ErrorKind::kShape, "measurement y has wrong size");
}

class AggregateGuidance : public StepGuidance {
 public:
  AggregateGuidance(const Tensor& y, const ForwardOp& h, const GuidanceConfig& g) : y_(y), h_(h), g_(g) {}
  void on_aggregate(std::size_t, Tensor& z_hat) const override {
    if (g_.gamma == 0.0) return;
    z_hat -= g_.rule == GuidanceRule::kSquared ? likelihood_grad(y_, h_, z_hat, g_.gamma)
                                               : likelihood_grad_norm(y_, h_, z_hat, g_.gamma);
  }

 private:
  const Tensor& y_;
  const ForwardOp& h_;
  const GuidanceConfig& g_;
};

// H̃ = S HᵀH Sᵀ is the 0/1 projector onto coordinates kept by both S and H,
// and ỹ = S Hᵀ y. The guidance therefore only touches those coordinates.
class PartialGuidance : public StepGuidance {
 public:
  PartialGuidance(const Tensor& y, const ForwardOp& h, const GuidanceConfig& g)
      : lifted_(h.adjoint(y)), in_h_(h.mask().diag_sts()), g_(g) {}
  void on_partial(std::size_t, const MaskOp& mask, Tensor& s_hat) const override {
    if (g_.gamma == 0.0) return;
    const auto& idx = mask.indices();
    Tensor r = Tensor::zeros(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (in_h_[idx[k]] != 0.0) r[k] = s_hat[k] - lifted_[idx[k]];
    }
    double scale = 2.0 * g_.gamma;
    if (g_.rule == GuidanceRule::kNorm) {
      const double norm = norm2(r);
      scale = norm > 0.0 ? g_.gamma / norm : 0.0;
    }
    for (std::size_t k = 0; k < idx.size(); ++k) s_hat[k] -= scale * r[k];
  }

 private:
  Tensor lifted_;
  Tensor in_h_;
  const GuidanceConfig& g_;
};

}  // namespace

Tensor guide_partial(const MaskOp& mask, const Tensor& s_hat, const Tensor& y, const ForwardOp& h,
                     const GuidanceConfig& gcfg) {
  if (h.kind() == ForwardKind::kDownsampleBlur) fail(ErrorKind::kConfig, "per-mask guidance needs a 0/1 forward operator");
  if (mask.n() != h.input_size() || s_hat.size() != mask.m()) fail(ErrorKind::kShape, "per-mask guidance: size mismatch");
  Tensor out = s_hat;
  PartialGuidance(y, h, gcfg).on_partial(0, mask, out);
  return out;
}

Tensor reconstruct_general(const Denoiser& model, const MaskDistribution& dist, const Tensor& y, const ForwardOp& h,
                           const SamplerConfig& cfg, const GuidanceConfig& gcfg, Rng& rng) {
  check_problem(model, dist, y, h, gcfg);
  const AggregateGuidance guidance(y, h, gcfg);
  SamplerConfig quiet = cfg;
  quiet.record_trace = false;
  return sample_unconditional(model, dist, quiet, rng, &guidance).z0;
}

Tensor reconstruct_per_mask_mri(const Denoiser& model, const MaskDistribution& dist, const Tensor& y,
                                const ForwardOp& h, const SamplerConfig& cfg, const GuidanceConfig& gcfg, Rng& rng) {
  check_problem(model, dist, y, h, gcfg);
  if (h.kind() != ForwardKind::kKspaceSubsample) fail(ErrorKind::kConfig, "per-mask MRI guidance needs a kspace_subsample operator");
  if (dist.kind() != MaskKind::kKspaceLines) fail(ErrorKind::kConfig, "per-mask MRI guidance needs a kspace_lines mask distribution");
  const PartialGuidance guidance(y, h, gcfg);
  SamplerConfig quiet = cfg;
  quiet.record_trace = false;
  return sample_unconditional(model, dist, quiet, rng, &guidance).z0;
}

Tensor reconstruct(const Denoiser& model, const MaskDistribution& dist, const Tensor& y, const ForwardOp& h,
                   const SamplerConfig& cfg, const GuidanceConfig& gcfg, Rng& rng) {
  return gcfg.mode == PosteriorMode::kGeneral ? reconstruct_general(model, dist, y, h, cfg, gcfg, rng)
                                              : reconstruct_per_mask_mri(model, dist, y, h, cfg, gcfg, rng);
}

}  // namespace msm
