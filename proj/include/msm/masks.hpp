// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "msm/numerics.hpp"

namespace msm {

/// Subsampling operator S: a strictly increasing index list into [0, n).
class MaskOp {
 public:
  MaskOp() = default;
  MaskOp(std::size_t n, std::vector<std::size_t> indices);
  static MaskOp full(std::size_t n);

  std::size_t n() const noexcept { return n_; }
  std::size_t m() const noexcept { return indices_.size(); }
  const std::vector<std::size_t>& indices() const noexcept { return indices_; }

  /// s = S z. `z` may have any shape with n entries.
  Tensor apply(const Tensor& z) const;
  /// Sᵀ s, zero-filling the unselected coordinates.
  Tensor adjoint(const Tensor& s) const;
  /// Adds Sᵀ s into `z` in place.
  void adjoint_add(const Tensor& s, Tensor& z) const;
  /// 0/1 coverage indicator diag(SᵀS).
  Tensor diag_sts() const;

  /// "n=<int>;m=<int>;idx=<comma list>"
  std::string to_string() const;
  static MaskOp parse(const std::string& text);

  bool operator==(const MaskOp& other) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> indices_;
};

/// Checks that S acts on an n-dimensional space and returns diag(SᵀS).
Tensor diag_sts(const MaskOp& mask, std::size_t n);

struct CoverageWeight {
  Tensor coverage;
  Tensor weight;
};

/// C = Σ diag(SᵢᵀSᵢ), W = 1 / max(C, 1).
CoverageWeight coverage_and_weight(const std::vector<MaskOp>& masks, std::size_t n);

enum class MaskKind { kPatchBox, kKspaceLines, kUniformCoords, kFixedFamily };

const char* to_string(MaskKind kind);

/// Image layout [channels, height, width]; boxes tile the image and the same
/// boxes are dropped in every channel.
struct PatchBoxParams {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t box_h = 0;
  std::size_t box_w = 0;
  double keep = 1.0;
};

/// Measurement layout [coils, lines, readout, 2]. A kept phase-encode line is
/// kept for every coil, readout sample and re/im part.
struct KspaceLinesParams {
  std::size_t coils = 1;
  std::size_t lines = 0;
  std::size_t readout = 0;
  double acceleration = 1.0;
  std::size_t autocal = 0;
  /// When true the autocalibration lines are part of round(lines / R).
  bool autocal_in_budget = true;
};

/// Every coordinate kept independently with probability `keep`; coordinates
/// are grouped in blocks of `group` consecutive entries (2 for complex).
struct UniformCoordsParams {
  std::size_t n = 0;
  double keep = 1.0;
  std::size_t group = 1;
};

/// Finite family with explicit probabilities (uniform when left empty).
struct FixedFamilyParams {
  std::vector<MaskOp> masks;
  std::vector<double> probs;
};

class MaskDistribution {
 public:
  using Params = std::variant<PatchBoxParams, KspaceLinesParams, UniformCoordsParams, FixedFamilyParams>;

  static MaskDistribution patch_box(const PatchBoxParams& p);
  static MaskDistribution kspace_lines(const KspaceLinesParams& p);
  static MaskDistribution uniform_coords(const UniformCoordsParams& p);
  static MaskDistribution fixed_family(std::vector<MaskOp> masks, std::vector<double> probs = {});
  static MaskDistribution always_full(std::size_t n);

  MaskKind kind() const noexcept { return kind_; }
  std::size_t n() const noexcept { return n_; }
  const Params& params() const noexcept { return params_; }

  MaskOp sample(Rng& rng) const;

  bool enumerable() const noexcept { return kind_ == MaskKind::kFixedFamily; }
  /// (mask, probability) pairs of a fixed family.
  std::vector<std::pair<MaskOp, double>> enumerate() const;

  /// Exact E[diag(SᵀS)] under this distribution.
  Tensor expected_coverage() const;

  std::string describe() const;

 private:
  MaskDistribution(MaskKind kind, std::size_t n, Params params);

  MaskKind kind_;
  std::size_t n_;
  Params params_;
};

/// Lines always acquired by a kspace_lines distribution (fftshift-centred on
/// the unshifted DFT grid).
std::vector<std::size_t> autocal_lines(const KspaceLinesParams& p);
/// Phase-encode lines present in a kspace_lines mask.
std::vector<std::size_t> kept_lines(const MaskOp& mask, const KspaceLinesParams& p);
/// Indices of the boxes (row-major over the box grid) kept by a patch mask.
std::vector<std::size_t> kept_boxes(const MaskOp& mask, const PatchBoxParams& p);

/// Population weight from a coverage expectation: 1/E[C], with W = 1 where
/// E[C] = 0.
Tensor weight_from_coverage(const Tensor& expected_coverage);

/// Monte Carlo estimate of the population weight from `draws` masks.
Tensor expected_weight(const MaskDistribution& dist, std::size_t draws, Rng& rng);

}  // namespace msm
