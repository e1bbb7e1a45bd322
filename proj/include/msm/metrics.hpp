// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "msm/numerics.hpp"

namespace msm {

double mse(const Tensor& x_hat, const Tensor& x);

/// 10·log10(peak² / mse); +infinity when the inputs agree exactly.
double psnr(const Tensor& x_hat, const Tensor& x, double peak);

/// Mean SSIM over all 8×8 windows (stride 1) of each [height, width] plane,
/// averaged over planes, with k1 = 0.01, k2 = 0.03 and dynamic range L.
double ssim(const Tensor& x_hat, const Tensor& x, std::size_t height, std::size_t width, double data_range);

}  // namespace msm
