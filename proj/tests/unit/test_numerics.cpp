// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <numbers>
#include <sstream>

#include "msm/errors.hpp"
#include "msm/numerics.hpp"

namespace msm {
namespace {

Tensor random_complex(Rng& rng, std::size_t n) {
  Tensor z({n, 2}, std::vector<double>(2 * n), true);
  for (auto& v : z.values()) v = rng.gaussian();
  return z;
}

// O(n²) unitary DFT straight from the definition.
std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x, bool inverse) {
  const std::size_t n = x.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(j * k) / static_cast<double>(n);
      acc += x[j] * std::polar(1.0, angle);
    }
    out[k] = acc / std::sqrt(static_cast<double>(n));
  }
  return out;
}

TEST(Dft, DeltaIsFlat) {
  Tensor e({4, 2}, std::vector<double>(8, 0.0), true);
  e[0] = 1.0;
  const Tensor f = dft(e, false);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(f[2 * k], 0.5, 1e-15);
    EXPECT_NEAR(f[2 * k + 1], 0.0, 1e-15);
  }
}

TEST(Dft, MatchesNaiveSum) {
  Rng rng(11);
  const Tensor z = random_complex(rng, 8);
  for (bool inverse : {false, true}) {
    const auto expected = naive_dft(to_complex(z.values()), inverse);
    const auto got = to_complex(dft(z, inverse).values());
    double err = 0.0;
    for (std::size_t k = 0; k < 8; ++k) err = std::max(err, std::abs(got[k] - expected[k]));
    EXPECT_LT(err, 1e-9);
  }
}

TEST(Dft, UnitaryAndSelfInverseOverRandomInputs) {
  Rng rng(3);
  for (std::size_t n : {1u, 2u, 16u, 64u, 256u}) {
    for (int trial = 0; trial < 5; ++trial) {
      const Tensor z = random_complex(rng, n);
      const Tensor f = dft(z, false);
      EXPECT_NEAR(norm2(f), norm2(z), 1e-10);
      EXPECT_LT(max_abs_diff(dft(f, true), z), 1e-12);
    }
  }
}

TEST(Dft, TwoDimensionalMatchesSeparableNaive) {
  Rng rng(5);
  const std::size_t h = 4, w = 8;
  Tensor z({h, w, 2}, std::vector<double>(h * w * 2), true);
  for (auto& v : z.values()) v = rng.gaussian();
  const auto x = to_complex(z.values());
  std::vector<std::complex<double>> rows(h * w), expected(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    const auto out = naive_dft({x.begin() + static_cast<long>(r * w), x.begin() + static_cast<long>((r + 1) * w)}, false);
    std::copy(out.begin(), out.end(), rows.begin() + static_cast<long>(r * w));
  }
  for (std::size_t c = 0; c < w; ++c) {
    std::vector<std::complex<double>> col(h);
    for (std::size_t r = 0; r < h; ++r) col[r] = rows[r * w + c];
    const auto out = naive_dft(col, false);
    for (std::size_t r = 0; r < h; ++r) expected[r * w + c] = out[r];
  }
  const auto got = to_complex(dft2(z, false).values());
  for (std::size_t i = 0; i < h * w; ++i) EXPECT_LT(std::abs(got[i] - expected[i]), 1e-9);
  EXPECT_LT(max_abs_diff(dft2(dft2(z, false), true), z), 1e-12);
}

TEST(Dft, RejectsNonPowerOfTwo) {
  Tensor z({6, 2}, std::vector<double>(12, 0.0), true);
  try {
    dft(z, false);
    FAIL() << "expected UnsupportedSize";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnsupportedSize);
  }
}

TEST(Rng, FreshStatesRepeat) {
  Rng a(7), b(7);
  const Tensor x = gaussian(a, {2});
  const Tensor y = gaussian(b, {2});
  EXPECT_EQ(x, y);
}

TEST(Rng, SplitIsIndependentOfParentUse) {
  Rng parent(9);
  const Rng child_before = parent.split(4);
  parent.next_u64();
  Rng c1 = child_before;
  Rng c2 = parent.split(4);
  EXPECT_EQ(c1.next_u64(), c2.next_u64());
  Rng other = parent.split(5);
  Rng c3 = parent.split(4);
  EXPECT_NE(other.next_u64(), c3.next_u64());
}

TEST(Rng, GaussianMoments) {
  Rng rng(123);
  const std::size_t n = 1000000;
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  EXPECT_LT(std::abs(mean), 0.01);
  EXPECT_LT(std::abs(sq / n - mean * mean - 1.0), 0.01);
}

TEST(Rng, RademacherSquaresToOne) {
  Rng rng(1);
  const Tensor r = rademacher(rng, {1000});
  double sum = 0.0;
  for (double v : r.values()) {
    EXPECT_EQ(v * v, 1.0);
    sum += v;
  }
  EXPECT_LT(std::abs(sum), 150.0);
}

TEST(Rng, UniformIndexCoversRange) {
  Rng rng(2);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[rng.uniform_index(7)];
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, SampleWithoutReplacementIsDistinct) {
  Rng rng(4);
  auto idx = sample_without_replacement(rng, 20, 20);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(idx[i], i);
}

TEST(TensorFile, RoundTripKeepsBitsShapeAndFlag) {
  Rng rng(8);
  Tensor t({3, 2, 2}, std::vector<double>(12), true);
  for (auto& v : t.values()) v = rng.gaussian() * 1e-300;
  t[0] = -0.0;
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "MSMT");
  EXPECT_EQ(bytes.substr(4, bytes.find('\n') - 4), "dtype=f64;shape=3,2,2;complex=1");
  const Tensor back = read_tensor(ss);
  EXPECT_EQ(back.shape(), t.shape());
  EXPECT_TRUE(back.is_complex());
  EXPECT_EQ(std::memcmp(back.storage().data(), t.storage().data(), 12 * sizeof(double)), 0);
}

TEST(TensorFile, RejectsBadMagicAndTruncation) {
  std::stringstream bad("XXXXdtype=f64;shape=1;complex=0\n");
  EXPECT_THROW(read_tensor(bad), Error);
  std::stringstream ss;
  write_tensor(ss, Tensor::vector({1.0, 2.0}));
  std::string bytes = ss.str();
  bytes.pop_back();
  std::stringstream cut(bytes);
  try {
    read_tensor(cut);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFile);
  }
}

TEST(Tensor, ShapeMismatchIsShapeError) {
  try {
    Tensor t({2, 3}, std::vector<double>(5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
    EXPECT_NE(std::string(e.what()).find("ShapeError"), std::string::npos);
  }
}

TEST(FormatDouble, RoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.9}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_double(INFINITY), "inf");
}

}  // namespace
}  // namespace msm
