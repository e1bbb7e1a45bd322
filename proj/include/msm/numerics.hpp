// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace msm {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Complex tensors carry a trailing
/// dimension of 2 holding (re, im) pairs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data, bool is_complex = false);

  static Tensor vector(std::vector<double> values);
  static Tensor zeros(std::size_t n) { return Tensor(Shape{n}); }
  /// Complex tensor of logical shape `shape`; storage shape is `shape + {2}`.
  static Tensor complex_zeros(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool is_complex() const noexcept { return complex_; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Same data, new shape with identical element count.
  Tensor reshaped(Shape shape) const;
  /// Row `i` of a rank-2 tensor as a flat vector.
  Tensor row(std::size_t i) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double scale);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
  bool complex_ = false;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);
/// Elementwise product.
Tensor hadamard(const Tensor& a, const Tensor& b);

double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
void require_same_size(const Tensor& a, const Tensor& b, const char* what);
/// Throws NumericalError naming `what` if any entry is NaN or infinite.
void require_finite(const Tensor& t, const char* what);
/// Stacks equal-length vectors into a [rows, n] tensor.
Tensor stack_rows(const std::vector<Tensor>& rows);

/// Seeded pseudo-random stream. Draw sequences are a pure function of
/// (seed, stream) and the call order; `split` derives independent child
/// streams without touching the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  Rng split(std::uint64_t stream_id) const;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n); unbiased.
  std::size_t uniform_index(std::size_t n);
  double gaussian();
  double rademacher();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

Tensor gaussian(Rng& rng, const Shape& shape);
Tensor rademacher(Rng& rng, const Shape& shape);

/// Random permutation prefix: `count` distinct values from [0, n).
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t count);

bool is_power_of_two(std::size_t n);

/// Unitary radix-2 FFT in place (1/sqrt(n) scaling in both directions).
void fft_inplace(std::span<std::complex<double>> data, bool inverse);

/// Unitary 1-D DFT of a complex tensor with storage shape [L, 2].
Tensor dft(const Tensor& z, bool inverse);
/// Unitary 2-D DFT over the last two logical axes of a complex tensor with
/// storage shape [..., H, W, 2].
Tensor dft2(const Tensor& z, bool inverse);

std::vector<std::complex<double>> to_complex(std::span<const double> interleaved);
void from_complex(std::span<const std::complex<double>> values, std::span<double> interleaved);

// Binary tensor format: "MSMT", header line
// "dtype=f64;shape=a,b,c;complex=0|1\n", little-endian f64 payload.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

/// 8-bit binary PGM of `pixels` (height*width values), min-max scaled.
void save_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t height,
              std::size_t width);

/// Magnitude image of a complex [H, W, 2] tensor or copy of a real one.
std::vector<double> magnitude(const Tensor& image);

/// Round-trip-exact decimal rendering for CSV/JSON outputs.
std::string format_double(double v);

}  // namespace msm
