// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace msm {

enum class ErrorKind {
  kConfig,
  kShape,
  kUnsupportedSize,
  kNumerical,
  kDegenerateNoise,
  kContractViolation,
  kCaseMismatch,
  kFile,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` selects the C status code
/// and the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace msm
