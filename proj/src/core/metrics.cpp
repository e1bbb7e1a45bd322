// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/metrics.hpp"

#include <cmath>
#include <limits>

#include "msm/errors.hpp"

namespace msm {

double mse(const Tensor& x_hat, const Tensor& x) {
  require_same_size(x_hat, x, "mse");
  if (x.size() == 0) fail(ErrorKind::kShape, "mse of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x_hat[i] - x[i]) * (x_hat[i] - x[i]);
  return acc / static_cast<double>(x.size());
}

double psnr(const Tensor& x_hat, const Tensor& x, double peak) {
  if (!(peak > 0.0)) fail(ErrorKind::kConfig, "psnr needs peak > 0");
  const double e = mse(x_hat, x);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / e);
}

double ssim(const Tensor& x_hat, const Tensor& x, std::size_t height, std::size_t width, double data_range) {
  require_same_size(x_hat, x, "ssim");
  constexpr std::size_t kWin = 8;
  if (height < kWin || width < kWin) fail(ErrorKind::kShape, "ssim needs images of at least 8x8");
  if (height * width == 0 || x.size() % (height * width) != 0) fail(ErrorKind::kShape, "ssim plane size mismatch");
  if (!(data_range > 0.0)) fail(ErrorKind::kConfig, "ssim needs a positive data range");
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const std::size_t planes = x.size() / (height * width);
  const double count = static_cast<double>(kWin * kWin);
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * height * width;
    for (std::size_t i = 0; i + kWin <= height; ++i) {
      for (std::size_t j = 0; j + kWin <= width; ++j) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (std::size_t di = 0; di < kWin; ++di) {
          for (std::size_t dj = 0; dj < kWin; ++dj) {
            const double a = x_hat[base + (i + di) * width + j + dj];
            const double b = x[base + (i + di) * width + j + dj];
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
          }
        }
        const double ma = sa / count, mb = sb / count;
        // Unbiased window statistics.
        const double va = (saa - count * ma * ma) / (count - 1.0);
        const double vb = (sbb - count * mb * mb) / (count - 1.0);
        const double cov = (sab - count * ma * mb) / (count - 1.0);
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++windows;
      }
    }
  }
  return total / static_cast<double>(windows);
}

}  // namespace msm
