// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/toy_data.hpp"

#include <cmath>
#include <numbers>

#include "msm/errors.hpp"

namespace msm {

Shape GaussianFieldSpec::image_shape() const {
  if (complex) return {height, width, 2};
  return {channels, height, width};
}

void validate(const GaussianFieldSpec& spec) {
  if (spec.height == 0 || spec.width == 0 || spec.channels == 0) fail(ErrorKind::kConfig, "field dims must be positive");
  if (spec.complex && spec.channels != 1) fail(ErrorKind::kConfig, "complex fields have a single channel");
  if (!(spec.length_scale > 0.0)) fail(ErrorKind::kConfig, "length_scale must be positive");
  if (!(spec.support >= 0.0)) fail(ErrorKind::kConfig, "support must be nonnegative");
}

namespace {

// Circular blur matrix for one plane, rows normalised to unit output variance.
Eigen::MatrixXd blur_factor(const GaussianFieldSpec& spec) {
  const std::size_t h = spec.height, w = spec.width, p = h * w;
  Eigen::MatrixXd k(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  auto wrap = [](std::size_t a, std::size_t b, std::size_t n) {
    const std::size_t d = a > b ? a - b : b - a;
    return static_cast<double>(std::min(d, n - d));
  };
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const double dy = wrap(i / w, j / w, h);
      const double dx = wrap(i % w, j % w, w);
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::exp(-(dx * dx + dy * dy) / (2.0 * spec.length_scale * spec.length_scale));
    }
  }
  // Every row has the same norm on the torus.
  k /= k.row(0).norm();
  if (spec.support > 0.0) {
    const double cy = static_cast<double>(h) / 2.0 - 0.5, cx = static_cast<double>(w) / 2.0 - 0.5;
    const double ry = spec.support * static_cast<double>(h), rx = spec.support * static_cast<double>(w);
    for (std::size_t i = 0; i < p; ++i) {
      const double dy = (static_cast<double>(i / w) - cy) / ry;
      const double dx = (static_cast<double>(i % w) - cx) / rx;
      if (dy * dy + dx * dx > 1.0) k.row(static_cast<Eigen::Index>(i)).setZero();
    }
  }
  return k;
}

// Factor L with Σ = L Lᵀ for the whole flattened image.
Eigen::MatrixXd field_factor(const GaussianFieldSpec& spec) {
  const Eigen::MatrixXd k = blur_factor(spec);
  const Eigen::Index p = k.rows();
  const Eigen::Index planes = spec.complex ? 2 : static_cast<Eigen::Index>(spec.channels);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(p * planes, p * planes);
  for (Eigen::Index c = 0; c < planes; ++c) {
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        // Complex images interleave (re, im) per pixel; real ones stack planes.
        const Eigen::Index row = spec.complex ? 2 * i + c : c * p + i;
        const Eigen::Index col = spec.complex ? 2 * j + c : c * p + j;
        l(row, col) = k(i, j);
      }
    }
  }
  return l;
}

}  // namespace

Eigen::MatrixXd gaussian_field_covariance(const GaussianFieldSpec& spec) {
  validate(spec);
  const Eigen::MatrixXd l = field_factor(spec);
  return l * l.transpose();
}

Tensor sample_gaussian_field(const GaussianFieldSpec& spec, Rng& rng) {
  validate(spec);
  const std::size_t h = spec.height, w = spec.width, p = h * w;
  const Eigen::MatrixXd k = blur_factor(spec);
  const std::size_t planes = spec.complex ? 2 : spec.channels;
  Tensor x(spec.image_shape(), std::vector<double>(shape_size(spec.image_shape())), spec.complex);
  for (std::size_t c = 0; c < planes; ++c) {
    Eigen::VectorXd e(static_cast<Eigen::Index>(p));
    for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = rng.gaussian();
    const Eigen::VectorXd v = k * e;
    for (std::size_t i = 0; i < p; ++i) {
      const std::size_t o = spec.complex ? 2 * i + c : c * p + i;
      x[o] = v(static_cast<Eigen::Index>(i));
    }
  }
  return x;
}

GaussianOracle measurement_oracle(const GaussianFieldSpec& spec, const Transform& transform) {
  validate(spec);
  if (shape_size(spec.image_shape()) != transform.image_size()) fail(ErrorKind::kShape, "field and transform image sizes differ");
  const Eigen::MatrixXd l = field_factor(spec);
  const auto n = static_cast<Eigen::Index>(transform.measurement_size());
  Eigen::MatrixXd tl(n, l.cols());
  for (Eigen::Index c = 0; c < l.cols(); ++c) {
    const Eigen::VectorXd col = l.col(c);
    const Tensor z = transform.forward(Tensor::vector(std::vector<double>(col.data(), col.data() + col.size())));
    for (Eigen::Index r = 0; r < n; ++r) tl(r, c) = z[static_cast<std::size_t>(r)];
  }
  Eigen::MatrixXd cov = tl * tl.transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
  return GaussianOracle(Tensor::zeros(static_cast<std::size_t>(n)), std::move(cov));
}

Tensor sample_phantom(std::size_t height, std::size_t width, bool complex, Rng& rng) {
  if (height == 0 || width == 0) fail(ErrorKind::kConfig, "phantom dims must be positive");
  const std::size_t count = 3 + rng.uniform_index(4);
  std::vector<double> img(height * width, 0.0);
  for (std::size_t e = 0; e < count; ++e) {
    const double cy = (0.2 + 0.6 * rng.uniform()) * static_cast<double>(height);
    const double cx = (0.2 + 0.6 * rng.uniform()) * static_cast<double>(width);
    const double ry = (0.1 + 0.3 * rng.uniform()) * static_cast<double>(height);
    const double rx = (0.1 + 0.3 * rng.uniform()) * static_cast<double>(width);
    const double angle = std::numbers::pi * rng.uniform();
    const double value = 0.1 + 0.9 * rng.uniform();
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - cy;
        const double dx = static_cast<double>(x) + 0.5 - cx;
        const double u = (ca * dx + sa * dy) / rx;
        const double v = (-sa * dx + ca * dy) / ry;
        if (u * u + v * v <= 1.0) img[y * width + x] += value;
      }
    }
  }
  for (double& v : img) v = std::min(v, 1.0);
  if (!complex) return Tensor({1, height, width}, std::move(img));
  const double slope_y = 0.4 * (rng.uniform() - 0.5), slope_x = 0.4 * (rng.uniform() - 0.5);
  Tensor out = Tensor::complex_zeros({height, width});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double phase = slope_y * static_cast<double>(y) + slope_x * static_cast<double>(x);
      out[2 * (y * width + x)] = img[y * width + x] * std::cos(phase);
      out[2 * (y * width + x) + 1] = img[y * width + x] * std::sin(phase);
    }
  }
  return out;
}

Eigen::MatrixXd ar1_covariance(std::size_t n, double rho) {
  if (n == 0 || !(std::abs(rho) < 1.0)) fail(ErrorKind::kConfig, "AR(1) covariance needs n >= 1 and |rho| < 1");
  Eigen::MatrixXd c(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::pow(rho, static_cast<double>(i > j ? i - j : j - i));
    }
  }
  return c;
}

}  // namespace msm
