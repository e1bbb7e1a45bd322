// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "msm/numerics.hpp"

namespace msm {

enum class TransformKind { kIdentity, kFourierCoils };

const char* to_string(TransformKind kind);

/// Invertible map T from images x to full measurements z. Both instances are
/// isometries, so the inverse is the adjoint.
class Transform {
 public:
  /// Identity on images of the given shape.
  static Transform identity(Shape image_shape);
  /// z_k = F(c_k ⊙ x) for coil maps of storage shape [K, H, W, 2]; images are
  /// complex [H, W, 2].
  static Transform fourier_coils(Tensor coil_maps);

  TransformKind kind() const noexcept { return kind_; }
  const Shape& image_shape() const noexcept { return image_shape_; }
  const Shape& measurement_shape() const noexcept { return measurement_shape_; }
  std::size_t image_size() const { return shape_size(image_shape_); }
  std::size_t measurement_size() const { return shape_size(measurement_shape_); }
  const Tensor& coil_maps() const noexcept { return coils_; }
  std::size_t coils() const { return kind_ == TransformKind::kIdentity ? 1 : coils_.shape()[0]; }

  /// Accepts any tensor with image_size() entries.
  Tensor forward(const Tensor& x) const;
  /// Accepts any tensor with measurement_size() entries.
  Tensor inverse(const Tensor& z) const;

 private:
  TransformKind kind_ = TransformKind::kIdentity;
  Shape image_shape_;
  Shape measurement_shape_;
  Tensor coils_;
};

/// Smooth complex sensitivities (Gaussian bumps with random centres and
/// phases) normalised so Σ_k |c_k|² = 1 at every pixel. Shape [K, H, W, 2].
Tensor make_coil_maps(std::size_t height, std::size_t width, std::size_t coils, Rng& rng);

}  // namespace msm
