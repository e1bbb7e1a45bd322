// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstddef>

#include "msm/denoiser.hpp"
#include "msm/numerics.hpp"
#include "msm/transforms.hpp"

namespace msm {

/// Stationary Gaussian random field: white noise circularly blurred by a
/// Gaussian kernel of the given length scale, scaled to unit variance per
/// real component. Complex fields have independent real and imaginary parts.
struct GaussianFieldSpec {
  std::size_t channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  double length_scale = 1.5;
  bool complex = false;
  /// When positive, the field is multiplied by a centred elliptical support
  /// with semi-axes support·height and support·width (zero background).
  double support = 0.0;

  /// Storage shape [channels, height, width] or [height, width, 2].
  Shape image_shape() const;
};

void validate(const GaussianFieldSpec& spec);

/// Exact covariance of the flattened image.
Eigen::MatrixXd gaussian_field_covariance(const GaussianFieldSpec& spec);
Tensor sample_gaussian_field(const GaussianFieldSpec& spec, Rng& rng);

/// Exact prior of z = T x for x from the field: N(0, T Σ Tᵀ).
GaussianOracle measurement_oracle(const GaussianFieldSpec& spec, const Transform& transform);

/// Random superposition of ellipses with intensities in [0.1, 1], real
/// [1, height, width] or complex [height, width, 2] with a smooth phase.
Tensor sample_phantom(std::size_t height, std::size_t width, bool complex, Rng& rng);

/// Stationary AR(1) covariance ρ^|i−j| on n coordinates.
Eigen::MatrixXd ar1_covariance(std::size_t n, double rho);

}  // namespace msm
