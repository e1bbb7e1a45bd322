// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "msm/errors.hpp"

namespace msm {

MaskOp::MaskOp(std::size_t n, std::vector<std::size_t> indices) : n_(n), indices_(std::move(indices)) {
  if (indices_.empty()) fail(ErrorKind::kConfig, "mask must keep at least one coordinate");
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] >= n_) fail(ErrorKind::kConfig, "mask index " + std::to_string(indices_[i]) + " outside [0, " + std::to_string(n_) + ")");
    if (i > 0 && indices_[i] <= indices_[i - 1]) fail(ErrorKind::kConfig, "mask indices must be strictly increasing");
  }
}

MaskOp MaskOp::full(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return MaskOp(n, std::move(idx));
}

Tensor MaskOp::apply(const Tensor& z) const {
  if (z.size() != n_) fail(ErrorKind::kShape, "mask apply: expected " + std::to_string(n_) + " entries, got " + std::to_string(z.size()));
  std::vector<double> out(indices_.size());
  for (std::size_t i = 0; i < indices_.size(); ++i) out[i] = z[indices_[i]];
  return Tensor::vector(std::move(out));
}

Tensor MaskOp::adjoint(const Tensor& s) const {
  Tensor z = Tensor::zeros(n_);
  adjoint_add(s, z);
  return z;
}

void MaskOp::adjoint_add(const Tensor& s, Tensor& z) const {
  if (s.size() != indices_.size()) fail(ErrorKind::kShape, "mask adjoint: expected " + std::to_string(indices_.size()) + " entries, got " + std::to_string(s.size()));
  if (z.size() != n_) fail(ErrorKind::kShape, "mask adjoint: target has wrong size");
  for (std::size_t i = 0; i < indices_.size(); ++i) z[indices_[i]] += s[i];
}

Tensor MaskOp::diag_sts() const {
  Tensor d = Tensor::zeros(n_);
  for (std::size_t i : indices_) d[i] = 1.0;
  return d;
}

std::string MaskOp::to_string() const {
  std::string out = "n=" + std::to_string(n_) + ";m=" + std::to_string(indices_.size()) + ";idx=";
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(indices_[i]);
  }
  return out;
}

MaskOp MaskOp::parse(const std::string& text) {
  std::size_t n = 0;
  std::size_t m = 0;
  bool has_n = false, has_m = false, has_idx = false;
  std::vector<std::size_t> idx;
  std::stringstream fields(text);
  try {
    for (std::string field; std::getline(fields, field, ';');) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) fail(ErrorKind::kConfig, "bad mask field '" + field + "'");
      const std::string key = field.substr(0, eq);
      const std::string value = field.substr(eq + 1);
      if (key == "n") {
        n = std::stoull(value);
        has_n = true;
      } else if (key == "m") {
        m = std::stoull(value);
        has_m = true;
      } else if (key == "idx") {
        std::stringstream items(value);
        for (std::string item; std::getline(items, item, ',');) idx.push_back(std::stoull(item));
        has_idx = true;
      } else {
        fail(ErrorKind::kConfig, "unknown mask field '" + key + "'");
      }
    }
  } catch (const std::logic_error&) {
    fail(ErrorKind::kConfig, "unparseable mask '" + text + "'");
  }
  if (!has_n || !has_m || !has_idx) fail(ErrorKind::kConfig, "mask text needs n, m and idx");
  if (idx.size() != m) fail(ErrorKind::kConfig, "mask m=" + std::to_string(m) + " but idx has " + std::to_string(idx.size()) + " entries");
  return MaskOp(n, std::move(idx));
}

Tensor diag_sts(const MaskOp& mask, std::size_t n) {
  if (mask.n() != n) fail(ErrorKind::kShape, "mask dimension " + std::to_string(mask.n()) + " != " + std::to_string(n));
  return mask.diag_sts();
}

CoverageWeight coverage_and_weight(const std::vector<MaskOp>& masks, std::size_t n) {
  CoverageWeight out{Tensor::zeros(n), Tensor::zeros(n)};
  for (const auto& mask : masks) {
    if (mask.n() != n) fail(ErrorKind::kShape, "coverage: mask dimension mismatch");
    for (std::size_t i : mask.indices()) out.coverage[i] += 1.0;
  }
  for (std::size_t i = 0; i < n; ++i) out.weight[i] = 1.0 / std::max(out.coverage[i], 1.0);
  return out;
}

const char* to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::kPatchBox: return "patch_box";
    case MaskKind::kKspaceLines: return "kspace_lines";
    case MaskKind::kUniformCoords: return "uniform_coords";
    case MaskKind::kFixedFamily: return "fixed_family";
  }
  return "unknown";
}

namespace {

std::size_t box_count(const PatchBoxParams& p) { return (p.height / p.box_h) * (p.width / p.box_w); }

std::size_t dropped_boxes(const PatchBoxParams& p) {
  return static_cast<std::size_t>(std::lround((1.0 - p.keep) * static_cast<double>(box_count(p))));
}

std::size_t random_line_count(const KspaceLinesParams& p) {
  const auto budget = static_cast<std::size_t>(std::lround(static_cast<double>(p.lines) / p.acceleration));
  if (p.autocal_in_budget) return budget - p.autocal;
  return std::min(budget, p.lines - p.autocal);
}

MaskOp lines_to_mask(const std::vector<std::size_t>& lines_kept, const KspaceLinesParams& p) {
  std::vector<bool> keep(p.lines, false);
  for (std::size_t l : lines_kept) keep[l] = true;
  std::vector<std::size_t> idx;
  const std::size_t per_line = p.readout * 2;
  for (std::size_t k = 0; k < p.coils; ++k) {
    for (std::size_t l = 0; l < p.lines; ++l) {
      if (!keep[l]) continue;
      const std::size_t base = (k * p.lines + l) * per_line;
      for (std::size_t j = 0; j < per_line; ++j) idx.push_back(base + j);
    }
  }
  return MaskOp(p.coils * p.lines * per_line, std::move(idx));
}

MaskOp boxes_to_mask(const std::vector<bool>& dropped, const PatchBoxParams& p) {
  const std::size_t boxes_per_row = p.width / p.box_w;
  std::vector<std::size_t> idx;
  for (std::size_t c = 0; c < p.channels; ++c) {
    for (std::size_t y = 0; y < p.height; ++y) {
      for (std::size_t x = 0; x < p.width; ++x) {
        const std::size_t box = (y / p.box_h) * boxes_per_row + x / p.box_w;
        if (!dropped[box]) idx.push_back((c * p.height + y) * p.width + x);
      }
    }
  }
  return MaskOp(p.channels * p.height * p.width, std::move(idx));
}

}  // namespace

MaskDistribution::MaskDistribution(MaskKind kind, std::size_t n, Params params)
    : kind_(kind), n_(n), params_(std::move(params)) {}

MaskDistribution MaskDistribution::patch_box(const PatchBoxParams& p) {
  if (p.channels == 0 || p.height == 0 || p.width == 0) fail(ErrorKind::kConfig, "patch_box needs positive image dims");
  if (p.box_h == 0 || p.box_w == 0 || p.height % p.box_h != 0 || p.width % p.box_w != 0) {
    fail(ErrorKind::kConfig, "patch_box box size must tile the image");
  }
  if (!(p.keep > 0.0 && p.keep <= 1.0)) fail(ErrorKind::kConfig, "patch_box keep fraction must lie in (0, 1]");
  if (dropped_boxes(p) >= box_count(p)) fail(ErrorKind::kConfig, "patch_box keep fraction drops every box");
  return MaskDistribution(MaskKind::kPatchBox, p.channels * p.height * p.width, p);
}

MaskDistribution MaskDistribution::kspace_lines(const KspaceLinesParams& p) {
  if (p.coils == 0 || p.lines == 0 || p.readout == 0) fail(ErrorKind::kConfig, "kspace_lines needs positive dims");
  if (!(p.acceleration >= 1.0)) fail(ErrorKind::kConfig, "kspace_lines acceleration R must be >= 1");
  if (p.autocal > p.lines) fail(ErrorKind::kConfig, "more autocalibration lines than lines");
  const auto budget = static_cast<std::size_t>(std::lround(static_cast<double>(p.lines) / p.acceleration));
  if (p.autocal_in_budget && p.autocal > budget) {
    fail(ErrorKind::kConfig, "autocalibration lines exceed the R budget of " + std::to_string(budget));
  }
  if (p.autocal + random_line_count(p) == 0) fail(ErrorKind::kConfig, "kspace_lines keeps no lines");
  return MaskDistribution(MaskKind::kKspaceLines, p.coils * p.lines * p.readout * 2, p);
}

MaskDistribution MaskDistribution::uniform_coords(const UniformCoordsParams& p) {
  if (p.n == 0 || p.group == 0 || p.n % p.group != 0) fail(ErrorKind::kConfig, "uniform_coords needs n divisible by group");
  if (!(p.keep > 0.0 && p.keep <= 1.0)) fail(ErrorKind::kConfig, "uniform_coords keep probability must lie in (0, 1]");
  return MaskDistribution(MaskKind::kUniformCoords, p.n, p);
}

MaskDistribution MaskDistribution::fixed_family(std::vector<MaskOp> masks, std::vector<double> probs) {
  if (masks.empty()) fail(ErrorKind::kConfig, "fixed_family needs at least one mask");
  const std::size_t n = masks.front().n();
  for (const auto& m : masks) {
    if (m.n() != n) fail(ErrorKind::kConfig, "fixed_family masks must share the ambient dimension");
  }
  if (probs.empty()) probs.assign(masks.size(), 1.0 / static_cast<double>(masks.size()));
  if (probs.size() != masks.size()) fail(ErrorKind::kConfig, "fixed_family needs one probability per mask");
  double total = 0.0;
  for (double q : probs) {
    if (!(q >= 0.0)) fail(ErrorKind::kConfig, "fixed_family probabilities must be nonnegative");
    total += q;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorKind::kConfig, "fixed_family probabilities must sum to 1");
  return MaskDistribution(MaskKind::kFixedFamily, n, FixedFamilyParams{std::move(masks), std::move(probs)});
}

MaskDistribution MaskDistribution::always_full(std::size_t n) { return fixed_family({MaskOp::full(n)}); }

MaskOp MaskDistribution::sample(Rng& rng) const {
  switch (kind_) {
    case MaskKind::kPatchBox: {
      const auto& p = std::get<PatchBoxParams>(params_);
      std::vector<bool> dropped(box_count(p), false);
      for (std::size_t b : sample_without_replacement(rng, box_count(p), dropped_boxes(p))) dropped[b] = true;
      return boxes_to_mask(dropped, p);
    }
    case MaskKind::kKspaceLines: {
      const auto& p = std::get<KspaceLinesParams>(params_);
      std::vector<std::size_t> lines = autocal_lines(p);
      std::vector<bool> is_auto(p.lines, false);
      for (std::size_t l : lines) is_auto[l] = true;
      std::vector<std::size_t> rest;
      for (std::size_t l = 0; l < p.lines; ++l) {
        if (!is_auto[l]) rest.push_back(l);
      }
      for (std::size_t j : sample_without_replacement(rng, rest.size(), random_line_count(p))) lines.push_back(rest[j]);
      return lines_to_mask(lines, p);
    }
    case MaskKind::kUniformCoords: {
      const auto& p = std::get<UniformCoordsParams>(params_);
      for (;;) {
        std::vector<std::size_t> idx;
        for (std::size_t g = 0; g < p.n / p.group; ++g) {
          if (rng.uniform() < p.keep) {
            for (std::size_t j = 0; j < p.group; ++j) idx.push_back(g * p.group + j);
          }
        }
        // An empty draw is not a valid operator; redraw.
        if (!idx.empty()) return MaskOp(p.n, std::move(idx));
      }
    }
    case MaskKind::kFixedFamily: {
      const auto& p = std::get<FixedFamilyParams>(params_);
      const double u = rng.uniform();
      double acc = 0.0;
      for (std::size_t i = 0; i < p.masks.size(); ++i) {
        acc += p.probs[i];
        if (u < acc) return p.masks[i];
      }
      return p.masks.back();
    }
  }
  fail(ErrorKind::kConfig, "unknown mask kind");
}

std::vector<std::pair<MaskOp, double>> MaskDistribution::enumerate() const {
  if (!enumerable()) fail(ErrorKind::kConfig, std::string("mask distribution ") + to_string(kind_) + " is not enumerable");
  const auto& p = std::get<FixedFamilyParams>(params_);
  std::vector<std::pair<MaskOp, double>> out;
  for (std::size_t i = 0; i < p.masks.size(); ++i) out.emplace_back(p.masks[i], p.probs[i]);
  return out;
}

Tensor MaskDistribution::expected_coverage() const {
  Tensor cov = Tensor::zeros(n_);
  switch (kind_) {
    case MaskKind::kPatchBox: {
      const auto& p = std::get<PatchBoxParams>(params_);
      const double q = 1.0 - static_cast<double>(dropped_boxes(p)) / static_cast<double>(box_count(p));
      for (double& v : cov.values()) v = q;
      break;
    }
    case MaskKind::kKspaceLines: {
      const auto& p = std::get<KspaceLinesParams>(params_);
      std::vector<double> line_prob(p.lines, static_cast<double>(random_line_count(p)) / static_cast<double>(p.lines - p.autocal == 0 ? 1 : p.lines - p.autocal));
      for (std::size_t l : autocal_lines(p)) line_prob[l] = 1.0;
      for (std::size_t k = 0; k < p.coils; ++k) {
        for (std::size_t l = 0; l < p.lines; ++l) {
          for (std::size_t j = 0; j < 2 * p.readout; ++j) cov[(k * p.lines + l) * 2 * p.readout + j] = line_prob[l];
        }
      }
      break;
    }
    case MaskKind::kUniformCoords: {
      const auto& p = std::get<UniformCoordsParams>(params_);
      // Conditioning on a nonempty draw.
      const double groups = static_cast<double>(p.n / p.group);
      const double q = p.keep / (1.0 - std::pow(1.0 - p.keep, groups));
      for (double& v : cov.values()) v = q;
      break;
    }
    case MaskKind::kFixedFamily: {
      for (const auto& [mask, q] : enumerate()) {
        for (std::size_t i : mask.indices()) cov[i] += q;
      }
      break;
    }
  }
  return cov;
}

std::string MaskDistribution::describe() const {
  std::ostringstream out;
  out << to_string(kind_) << "(n=" << n_;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, PatchBoxParams>) {
          out << ", image=" << p.channels << "x" << p.height << "x" << p.width << ", box=" << p.box_h << "x" << p.box_w
              << ", keep=" << p.keep;
        } else if constexpr (std::is_same_v<P, KspaceLinesParams>) {
          out << ", coils=" << p.coils << ", lines=" << p.lines << ", R=" << p.acceleration << ", autocal=" << p.autocal
              << (p.autocal_in_budget ? ", in budget" : ", extra");
        } else if constexpr (std::is_same_v<P, UniformCoordsParams>) {
          out << ", keep=" << p.keep << ", group=" << p.group;
        } else {
          out << ", masks=" << p.masks.size();
        }
      },
      params_);
  out << ")";
  return out.str();
}

std::vector<std::size_t> autocal_lines(const KspaceLinesParams& p) {
  std::vector<std::size_t> out;
  const std::size_t h = p.lines;
  const std::size_t start = h / 2 - p.autocal / 2;
  for (std::size_t j = start; j < start + p.autocal; ++j) out.push_back((j + h - h / 2) % h);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::size_t> kept_lines(const MaskOp& mask, const KspaceLinesParams& p) {
  std::vector<std::size_t> out;
  const std::size_t per_line = 2 * p.readout;
  for (std::size_t i : mask.indices()) {
    if (i >= p.lines * per_line) break;
    const std::size_t l = i / per_line;
    if (out.empty() || out.back() != l) out.push_back(l);
  }
  return out;
}

std::vector<std::size_t> kept_boxes(const MaskOp& mask, const PatchBoxParams& p) {
  const std::size_t boxes_per_row = p.width / p.box_w;
  std::vector<bool> seen(box_count(p), false);
  for (std::size_t i : mask.indices()) {
    if (i >= p.height * p.width) break;
    seen[(i / p.width / p.box_h) * boxes_per_row + (i % p.width) / p.box_w] = true;
  }
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < seen.size(); ++b) {
    if (seen[b]) out.push_back(b);
  }
  return out;
}

Tensor weight_from_coverage(const Tensor& expected_coverage) {
  Tensor w = expected_coverage;
  for (double& v : w.values()) v = v > 0.0 ? 1.0 / v : 1.0;
  return w;
}

Tensor expected_weight(const MaskDistribution& dist, std::size_t draws, Rng& rng) {
  if (draws == 0) fail(ErrorKind::kConfig, "expected_weight needs at least one draw");
  Tensor cov = Tensor::zeros(dist.n());
  for (std::size_t d = 0; d < draws; ++d) {
    const MaskOp s = dist.sample(rng);
    for (std::size_t i : s.indices()) cov[i] += 1.0;
  }
  cov *= 1.0 / static_cast<double>(draws);
  return weight_from_coverage(cov);
}

}  // namespace msm
