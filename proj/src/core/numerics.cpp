// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/numerics.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "msm/errors.hpp"

namespace msm {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(shape[i]);
  }
  return out;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool is_complex)
    : shape_(std::move(shape)), data_(std::move(data)), complex_(is_complex) {
  if (shape_size(shape_) != data_.size()) {
    fail(ErrorKind::kShape, "shape [" + shape_string(shape_) + "] does not match " +
                                std::to_string(data_.size()) + " values");
  }
  if (complex_ && (shape_.empty() || shape_.back() != 2)) {
    fail(ErrorKind::kShape, "complex tensor needs a trailing dimension of 2");
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::complex_zeros(Shape shape) {
  shape.push_back(2);
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), true);
}

Tensor Tensor::reshaped(Shape shape) const {
  const bool keep_complex = complex_ && !shape.empty() && shape.back() == 2;
  return Tensor(std::move(shape), data_, keep_complex);
}

Tensor Tensor::row(std::size_t i) const {
  if (shape_.size() != 2 || i >= shape_[0]) fail(ErrorKind::kShape, "row index out of range");
  const std::size_t n = shape_[1];
  return Tensor::vector(std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                                            data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
}

void require_same_size(const Tensor& a, const Tensor& b, const char* what) {
  if (a.size() != b.size()) {
    fail(ErrorKind::kShape, std::string(what) + ": size " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_size(*this, other, "tensor add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_size(*this, other, "tensor subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_size(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_size(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_size(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void require_finite(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) {
      fail(ErrorKind::kNumerical, std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) return Tensor(Shape{0, 0});
  const std::size_t n = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * n);
  for (const auto& r : rows) {
    if (r.size() != n) fail(ErrorKind::kShape, "stack_rows: ragged rows");
    data.insert(data.end(), r.storage().begin(), r.storage().end());
  }
  return Tensor(Shape{rows.size(), n}, std::move(data));
}

// ---------------------------------------------------------------------------
// Random numbers

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t engine_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL));
}

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(engine_seed(seed, stream)) {}

Rng Rng::split(std::uint64_t stream_id) const {
  // Child streams hash the parent's (seed, stream) so nested splits never
  // collide with siblings at other depths.
  return Rng(splitmix64(seed_ ^ splitmix64(stream_ + 0x2545f4914f6cdd1dULL)), stream_id);
}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) fail(ErrorKind::kConfig, "uniform_index over an empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % bound);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on (0, 1] x [0, 1).
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }

Tensor gaussian(Rng& rng, const Shape& shape) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.gaussian();
  return t;
}

Tensor rademacher(Rng& rng, const Shape& shape) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.rademacher();
  return t;
}

std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t count) {
  if (count > n) fail(ErrorKind::kConfig, "cannot draw more items than available");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

// ---------------------------------------------------------------------------
// Fourier transforms

bool is_power_of_two(std::size_t n) { return n != 0 && std::has_single_bit(n); }

void fft_inplace(std::span<std::complex<double>> a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) fail(ErrorKind::kUnsupportedSize, "DFT length " + std::to_string(n) + " is not a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles from the angle directly; recurrence accumulates error.
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& v : a) v *= scale;
}

std::vector<std::complex<double>> to_complex(std::span<const double> interleaved) {
  std::vector<std::complex<double>> out(interleaved.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {interleaved[2 * i], interleaved[2 * i + 1]};
  return out;
}

void from_complex(std::span<const std::complex<double>> values, std::span<double> interleaved) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    interleaved[2 * i] = values[i].real();
    interleaved[2 * i + 1] = values[i].imag();
  }
}

Tensor dft(const Tensor& z, bool inverse) {
  if (z.shape().size() != 2 || z.shape()[1] != 2) fail(ErrorKind::kShape, "dft expects storage shape [L, 2]");
  auto c = to_complex(z.values());
  fft_inplace(c, inverse);
  Tensor out(z.shape(), std::vector<double>(z.size()), true);
  from_complex(c, out.values());
  return out;
}

Tensor dft2(const Tensor& z, bool inverse) {
  const Shape& s = z.shape();
  if (s.size() < 3 || s.back() != 2) fail(ErrorKind::kShape, "dft2 expects storage shape [..., H, W, 2]");
  const std::size_t h = s[s.size() - 3];
  const std::size_t w = s[s.size() - 2];
  if (!is_power_of_two(h) || !is_power_of_two(w)) {
    fail(ErrorKind::kUnsupportedSize, "dft2 dims " + std::to_string(h) + "x" + std::to_string(w) + " not powers of two");
  }
  const std::size_t planes = z.size() / (2 * h * w);
  auto c = to_complex(z.values());
  std::vector<std::complex<double>> column(h);
  for (std::size_t p = 0; p < planes; ++p) {
    std::complex<double>* base = c.data() + p * h * w;
    for (std::size_t r = 0; r < h; ++r) fft_inplace(std::span(base + r * w, w), inverse);
    for (std::size_t col = 0; col < w; ++col) {
      for (std::size_t r = 0; r < h; ++r) column[r] = base[r * w + col];
      fft_inplace(column, inverse);
      for (std::size_t r = 0; r < h; ++r) base[r * w + col] = column[r];
    }
  }
  Tensor out(s, std::vector<double>(z.size()), true);
  from_complex(c, out.values());
  return out;
}

// ---------------------------------------------------------------------------
// Files

namespace {

constexpr char kMagic[4] = {'M', 'S', 'M', 'T'};

void put_le(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffU);
  out.write(bytes, 8);
}

double get_le(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) fail(ErrorKind::kFile, "truncated tensor payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  out << "dtype=f64;shape=" << shape_string(t.shape()) << ";complex=" << (t.is_complex() ? 1 : 0) << '\n';
  for (double v : t.values()) put_le(out, v);
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kMagic)) fail(ErrorKind::kFile, "bad tensor magic");
  std::string header;
  std::getline(in, header);
  const std::string shape_key = "dtype=f64;shape=";
  const auto complex_pos = header.find(";complex=");
  if (header.rfind(shape_key, 0) != 0 || complex_pos == std::string::npos) {
    fail(ErrorKind::kFile, "bad tensor header '" + header + "'");
  }
  Shape shape;
  std::string dims = header.substr(shape_key.size(), complex_pos - shape_key.size());
  std::stringstream ss(dims);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) shape.push_back(static_cast<std::size_t>(std::stoull(item)));
  }
  const std::string flag = header.substr(complex_pos + 9);
  if (flag != "0" && flag != "1") fail(ErrorKind::kFile, "bad complex flag '" + flag + "'");
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = get_le(in);
  return Tensor(std::move(shape), std::move(data), flag == "1");
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kFile, "cannot write " + path.string());
  write_tensor(out, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kFile, "missing tensor file " + path.string());
  return read_tensor(in);
}

void save_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t height,
              std::size_t width) {
  if (pixels.size() != height * width) fail(ErrorKind::kShape, "pgm size mismatch");
  const auto [lo_it, hi_it] = std::minmax_element(pixels.begin(), pixels.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kFile, "cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (double v : pixels) {
    const double u = span > 0 ? (v - lo) / span : 0.0;
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(u, 0.0, 1.0)))));
  }
}

std::vector<double> magnitude(const Tensor& image) {
  if (!image.is_complex()) return image.storage();
  std::vector<double> out(image.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(image[2 * i], image[2 * i + 1]);
  return out;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace msm
