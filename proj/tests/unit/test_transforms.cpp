// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "msm/errors.hpp"
#include "msm/transforms.hpp"

namespace msm {
namespace {

Tensor random_image(Rng& rng, std::size_t h, std::size_t w) {
  Tensor x({h, w, 2}, std::vector<double>(h * w * 2), true);
  for (auto& v : x.values()) v = rng.gaussian();
  return x;
}

TEST(Identity, ForwardIsExact) {
  Rng rng(1);
  const Transform t = Transform::identity({1, 4, 4});
  const Tensor x = gaussian(rng, {1, 4, 4});
  EXPECT_EQ(t.forward(x), x);
  EXPECT_EQ(t.inverse(x), x);
}

TEST(FourierCoils, RoundTripAndParseval) {
  Rng rng(2);
  const Transform t = Transform::fourier_coils(make_coil_maps(16, 16, 2, rng));
  EXPECT_EQ(t.measurement_shape(), (Shape{2, 16, 16, 2}));
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_image(rng, 16, 16);
    const Tensor z = t.forward(x);
    EXPECT_NEAR(norm2(z), norm2(x), 1e-9);
    EXPECT_LT(max_abs_diff(t.inverse(z), x), 1e-9);
  }
}

TEST(FourierCoils, InverseIsAdjoint) {
  Rng rng(3);
  const Transform t = Transform::fourier_coils(make_coil_maps(8, 8, 3, rng));
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = random_image(rng, 8, 8);
    const Tensor v = gaussian(rng, {t.measurement_size()});
    EXPECT_NEAR(dot(t.forward(x), v), dot(x, t.inverse(v)), 1e-10);
  }
}

TEST(FourierCoils, Linear) {
  Rng rng(4);
  const Transform t = Transform::fourier_coils(make_coil_maps(8, 8, 2, rng));
  const Tensor x = random_image(rng, 8, 8), y = random_image(rng, 8, 8);
  const Tensor lhs = t.forward(2.0 * x + (-3.0) * y);
  const Tensor rhs = 2.0 * t.forward(x) + (-3.0) * t.forward(y);
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-10);
}

double coil_magnitude(const Tensor& maps, std::size_t k, std::size_t p) {
  const std::size_t pixels = maps.shape()[1] * maps.shape()[2];
  return std::hypot(maps[2 * (k * pixels + p)], maps[2 * (k * pixels + p) + 1]);
}

TEST(CoilMaps, SingleCoilHasUnitMagnitude) {
  Rng rng(5);
  const Tensor maps = make_coil_maps(8, 8, 1, rng);
  for (std::size_t p = 0; p < 64; ++p) EXPECT_NEAR(coil_magnitude(maps, 0, p), 1.0, 1e-12);
}

TEST(CoilMaps, SumOfSquaresIsOne) {
  Rng rng(6);
  const Tensor maps = make_coil_maps(16, 16, 4, rng);
  for (std::size_t p = 0; p < 256; ++p) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += std::pow(coil_magnitude(maps, k, p), 2);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(CoilMaps, Smooth) {
  Rng rng(7);
  const std::size_t h = 16, w = 16;
  const Tensor maps = make_coil_maps(h, w, 4, rng);
  double worst = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t p = y * w + x;
        for (std::size_t q : {y * w + (x + 1) % w, ((y + 1) % h) * w + x}) {
          if ((x + 1 == w && q == y * w) || (y + 1 == h && q == x)) continue;
          const std::size_t a = 2 * (k * h * w + p), b = 2 * (k * h * w + q);
          worst = std::max(worst, std::hypot(maps[a] - maps[b], maps[a + 1] - maps[b + 1]));
        }
      }
    }
  }
  EXPECT_LT(worst, 0.5);
}

TEST(FourierCoils, RejectsBadMaps) {
  EXPECT_THROW(Transform::fourier_coils(Tensor({2, 8, 8}, 1.0)), Error);
  Rng rng(8);
  try {
    Transform::fourier_coils(make_coil_maps(6, 8, 2, rng));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnsupportedSize);
  }
}

}  // namespace
}  // namespace msm
