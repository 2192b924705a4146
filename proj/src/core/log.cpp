// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "log.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <string>

#include "errors.hpp"

namespace pimtl {

namespace {

constexpr const char* kNames[] = {"error", "warn", "info", "debug"};

int initial_level() {
  const char* env = std::getenv("PIMTL_LOG");
  if (env == nullptr || *env == '\0') return static_cast<int>(LogLevel::kWarn);
  try {
    return static_cast<int>(parse_log_level(env));
  } catch (const Error&) {
    std::fprintf(stderr, "[pimtl] warn: ignoring unknown PIMTL_LOG level '%s'\n", env);
    return static_cast<int>(LogLevel::kWarn);
  }
}

std::atomic<int>& level_ref() {
  static std::atomic<int> level{initial_level()};
  return level;
}

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_ref().load()); }

void set_log_level(LogLevel level) { level_ref() = static_cast<int>(level); }

LogLevel parse_log_level(std::string_view name) {
  for (int i = 0; i < 4; ++i) {
    if (name == kNames[i]) return static_cast<LogLevel>(i);
  }
  fail(ErrorCode::kConfig, "unknown log level '" + std::string(name) + "' (error, warn, info, debug)");
}

void log_message(LogLevel level, std::string_view message) {
  if (static_cast<int>(level) > level_ref().load()) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::fprintf(stderr, "[pimtl] %s: %.*s\n", kNames[static_cast<int>(level)], static_cast<int>(message.size()),
               message.data());
}

}  // namespace pimtl
