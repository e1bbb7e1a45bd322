// Copyright 2026 The MSM Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "msm/errors.hpp"

namespace msm {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kShape: return "ShapeError";
    case ErrorKind::kUnsupportedSize: return "UnsupportedSize";
    case ErrorKind::kNumerical: return "NumericalError";
    case ErrorKind::kDegenerateNoise: return "DegenerateNoise";
    case ErrorKind::kContractViolation: return "ContractViolation";
    case ErrorKind::kCaseMismatch: return "CaseMismatch";
    case ErrorKind::kFile: return "FileError";
  }
  return "Error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace msm
