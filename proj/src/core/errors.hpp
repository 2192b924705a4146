// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace pimtl {

// Mirrors pimtl_status in the C header; values must stay in sync.
enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kDimension = 2,
  kConfig = 3,
  kIo = 4,
  kParse = 5,
  kVersion = 6,
  kState = 7,
  kCompatibility = 8,
  kData = 9,
  kDiverged = 10,
  kUnstable = 11,
  kLength = 12,
  kInternal = 13,
  kUndefined = 14,  // metric undefined for the input (constant sequence, zero range)
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace pimtl
