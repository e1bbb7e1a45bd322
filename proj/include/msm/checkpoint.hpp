// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msm/denoiser.hpp"

namespace msm {

struct OptimizerState {
  std::uint64_t steps = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// Everything needed to rebuild an MlpDenoiser and resume training.
struct Checkpoint {
  MlpDenoiserArch arch;
  Transform transform = Transform::identity({1});
  std::vector<double> parameters;
  std::uint64_t iteration = 0;
  std::uint64_t schedule_hash = 0;
  std::string config_digest;
  std::optional<OptimizerState> optimizer;
  std::optional<std::vector<double>> ema;
};

Checkpoint make_checkpoint(const MlpDenoiser& model);
MlpDenoiser restore_denoiser(const Checkpoint& ckpt);

/// Header line "MSMCKPT <json>\n" followed by tensors in the numerics format.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace msm
