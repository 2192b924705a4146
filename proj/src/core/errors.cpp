// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "errors.hpp"

namespace pimtl {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kOk: return "ok";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDimension: return "dimension";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kVersion: return "version";
    case ErrorCode::kState: return "state";
    case ErrorCode::kCompatibility: return "compatibility";
    case ErrorCode::kData: return "data";
    case ErrorCode::kDiverged: return "diverged";
    case ErrorCode::kUnstable: return "unstable";
    case ErrorCode::kLength: return "length";
    case ErrorCode::kInternal: return "internal";
    case ErrorCode::kUndefined: return "undefined";
  }
  return "unknown";
}

}  // namespace pimtl
