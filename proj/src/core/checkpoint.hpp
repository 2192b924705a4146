// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint: "PMTLCKPT", u32 version, u64 header length, a JSON
// header describing the layout, then the raw little-endian f64 blocks in
// header order.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"

namespace pimtl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Free-form training metadata stored alongside the weights.
using CheckpointInfo = std::map<std::string, std::string>;

std::vector<char> encode_checkpoint(PiCnnModel& model, const CheckpointInfo& info = {});

// Rebuilds a model (configuration, weights, optimiser state, batch-norm
// statistics, output scaling, step counter, RNG state).
std::unique_ptr<PiCnnModel> decode_checkpoint(std::span<const char> bytes,
                                              CheckpointInfo* info = nullptr,
                                              const std::string& source = "checkpoint");

// Loads state into an existing model; kCompatibility when layer shapes differ.
void restore_checkpoint(PiCnnModel& model, std::span<const char> bytes,
                        const std::string& source = "checkpoint");

void save_checkpoint(PiCnnModel& model, const std::filesystem::path& path,
                     const CheckpointInfo& info = {});
std::unique_ptr<PiCnnModel> load_checkpoint(const std::filesystem::path& path,
                                            CheckpointInfo* info = nullptr);

std::unique_ptr<PiCnnModel> clone_model(PiCnnModel& model);

}  // namespace pimtl
