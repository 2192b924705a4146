// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal stderr logger. The level comes from PIMTL_LOG (error, warn, info,
// debug; default warn).

#pragma once

#include <string_view>

namespace pimtl {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level();
void set_log_level(LogLevel level);
// kConfig for unknown names.
LogLevel parse_log_level(std::string_view name);
void log_message(LogLevel level, std::string_view message);

}  // namespace pimtl
