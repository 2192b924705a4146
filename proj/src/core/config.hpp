// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: every module's settings in one TOML document.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "experiment.hpp"
#include "sigproc.hpp"
#include "synth.hpp"
#include "training.hpp"

namespace pimtl {

inline constexpr int kConfigSchemaVersion = 1;

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 42;
  SynthConfig synth{};            // [dynamics] and [synth]
  EnvelopeSettings envelope{};    // [sigproc]
  std::size_t window_stride = 1;  // [sigproc] stride
  TrainConfig training{};         // [model] and [training]; the window length lives in [sigproc]
  ExperimentConfig experiment{};

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Unknown sections or keys, wrong value types and invariant violations are
// kConfig errors naming the key; TOML syntax errors are kParse with line and
// column. Missing keys keep their defaults.
RunConfig parse_config(std::string_view toml_text, std::string_view source = "config");
RunConfig load_config(const std::filesystem::path& path);

// Complete TOML document; parse_config(to_toml(c)) == c.
std::string to_toml(const RunConfig& config);

// 16 hex digits identifying the configuration (hash of to_toml).
std::string config_hash(const RunConfig& config);

// Copy of `config` with one key replaced by a TOML literal, e.g.
// ("experiment.scenario", "\"single\""). kConfig for unknown keys or
// invalid values.
RunConfig config_with_value(const RunConfig& config, std::string_view key, std::string_view toml_literal);
// The TOML literal currently stored under `key`.
std::string config_value(const RunConfig& config, std::string_view key);

struct ConfigKey {
  std::string key;            // "section.name" or "name" at the top level
  std::string default_value;  // TOML literal
  std::string description;
};

// Every accepted key with its compiled-in default, in document order.
std::vector<ConfigKey> config_reference();

}  // namespace pimtl
