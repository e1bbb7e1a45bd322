// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msm/errors.hpp"

namespace msm {

/// Names accepted by run_command: gen-data, train, sample, reconstruct,
/// kl-study, eval.
const std::vector<std::string>& command_names();

struct CommandResult {
  std::filesystem::path run_dir;
  /// One human-readable line.
  std::string summary;
};

/// Validates `config_json` against the command's schema, then runs it under
/// <outdir>/<run_id>/. `seed` overrides the config's "seed" key.
CommandResult run_command(const std::string& command, const std::string& config_json, std::optional<std::uint64_t> seed,
                          const std::filesystem::path& outdir);

/// Reads the config from disk (FileError when missing).
CommandResult run_command_file(const std::string& command, const std::filesystem::path& config_path,
                               std::optional<std::uint64_t> seed, const std::filesystem::path& outdir);

/// Process exit code for an error kind: 2 config, 3 numeric, 4 missing file.
int exit_code(ErrorKind kind);

}  // namespace msm
