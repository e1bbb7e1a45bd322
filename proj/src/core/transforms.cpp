// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/transforms.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "msm/errors.hpp"

namespace msm {

const char* to_string(TransformKind kind) {
  return kind == TransformKind::kIdentity ? "identity" : "fourier_coils";
}

Transform Transform::identity(Shape image_shape) {
  if (shape_size(image_shape) == 0) fail(ErrorKind::kConfig, "identity transform needs a nonempty image shape");
  Transform t;
  t.kind_ = TransformKind::kIdentity;
  t.image_shape_ = image_shape;
  t.measurement_shape_ = std::move(image_shape);
  return t;
}

Transform Transform::fourier_coils(Tensor coil_maps) {
  const Shape& s = coil_maps.shape();
  if (s.size() != 4 || s[3] != 2 || s[0] == 0) fail(ErrorKind::kShape, "coil maps need storage shape [K, H, W, 2]");
  if (!is_power_of_two(s[1]) || !is_power_of_two(s[2])) {
    fail(ErrorKind::kUnsupportedSize, "fourier_coils image dims must be powers of two");
  }
  Transform t;
  t.kind_ = TransformKind::kFourierCoils;
  t.image_shape_ = {s[1], s[2], 2};
  t.measurement_shape_ = s;
  t.coils_ = Tensor(s, coil_maps.storage(), true);
  return t;
}

Tensor Transform::forward(const Tensor& x) const {
  if (x.size() != image_size()) {
    fail(ErrorKind::kShape, "transform forward: expected " + std::to_string(image_size()) + " entries, got " + std::to_string(x.size()));
  }
  if (kind_ == TransformKind::kIdentity) return Tensor(image_shape_, x.storage());
  const std::size_t plane = image_size();
  Tensor weighted(measurement_shape_, std::vector<double>(measurement_size()), true);
  for (std::size_t k = 0; k < coils(); ++k) {
    for (std::size_t p = 0; p < plane / 2; ++p) {
      const std::complex<double> c{coils_[k * plane + 2 * p], coils_[k * plane + 2 * p + 1]};
      const std::complex<double> v = c * std::complex<double>{x[2 * p], x[2 * p + 1]};
      weighted[k * plane + 2 * p] = v.real();
      weighted[k * plane + 2 * p + 1] = v.imag();
    }
  }
  return dft2(weighted, false);
}

Tensor Transform::inverse(const Tensor& z) const {
  if (z.size() != measurement_size()) {
    fail(ErrorKind::kShape, "transform inverse: expected " + std::to_string(measurement_size()) + " entries, got " + std::to_string(z.size()));
  }
  if (kind_ == TransformKind::kIdentity) return Tensor(image_shape_, z.storage());
  const Tensor images = dft2(Tensor(measurement_shape_, z.storage(), true), true);
  const std::size_t plane = image_size();
  Tensor x(image_shape_, std::vector<double>(plane), true);
  for (std::size_t k = 0; k < coils(); ++k) {
    for (std::size_t p = 0; p < plane / 2; ++p) {
      const std::complex<double> c{coils_[k * plane + 2 * p], coils_[k * plane + 2 * p + 1]};
      const std::complex<double> v = std::conj(c) * std::complex<double>{images[k * plane + 2 * p], images[k * plane + 2 * p + 1]};
      x[2 * p] += v.real();
      x[2 * p + 1] += v.imag();
    }
  }
  return x;
}

Tensor make_coil_maps(std::size_t height, std::size_t width, std::size_t coils, Rng& rng) {
  if (coils == 0) fail(ErrorKind::kConfig, "need at least one coil");
  Tensor maps = Tensor::complex_zeros({coils, height, width});
  const double hh = static_cast<double>(height);
  const double ww = static_cast<double>(width);
  for (std::size_t k = 0; k < coils; ++k) {
    // Centres sit on a ring around the image with a little jitter.
    const double angle = 2.0 * std::numbers::pi * (static_cast<double>(k) + 0.3 * rng.uniform()) / static_cast<double>(coils);
    const double cy = hh / 2.0 + 0.5 * hh * std::sin(angle);
    const double cx = ww / 2.0 + 0.5 * ww * std::cos(angle);
    const double width_px = 0.5 * std::max(hh, ww);
    const double phase0 = 2.0 * std::numbers::pi * rng.uniform();
    const double phase_slope = 0.3 * (rng.uniform() - 0.5);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        const double mag = std::exp(-(dx * dx + dy * dy) / (2.0 * width_px * width_px));
        const std::complex<double> v = std::polar(mag, phase0 + phase_slope * (dx + dy));
        const std::size_t o = ((k * height + y) * width + x) * 2;
        maps[o] = v.real();
        maps[o + 1] = v.imag();
      }
    }
  }
  for (std::size_t p = 0; p < height * width; ++p) {
    double energy = 0.0;
    for (std::size_t k = 0; k < coils; ++k) {
      const std::size_t o = (k * height * width + p) * 2;
      energy += maps[o] * maps[o] + maps[o + 1] * maps[o + 1];
    }
    const double scale = 1.0 / std::sqrt(energy);
    for (std::size_t k = 0; k < coils; ++k) {
      const std::size_t o = (k * height * width + p) * 2;
      maps[o] *= scale;
      maps[o + 1] *= scale;
    }
  }
  return maps;
}

}  // namespace msm
