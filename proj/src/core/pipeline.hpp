// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// The command-level pipeline: synth, preprocess, train, personalize,
// evaluate and experiment. Every command writes its output directory in a
// staging location and renames it into place.

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "config.hpp"

namespace pimtl {

// Raw dataset from config.synth and config.seed.
void cmd_synth(const RunConfig& config, const std::filesystem::path& out, Encoding encoding);

// Envelope dataset plus preprocess.json.
void cmd_preprocess(const RunConfig& config, const std::filesystem::path& raw_dir,
                    const std::filesystem::path& out, Encoding encoding);

// Trains a from-scratch method with training seed config.seed. CNN-1 and
// Pi-CNN-1 use every subject except the held-out one; CNN-2 and Pi-CNN-2 use
// the held-out subject only. Writes model.ckpt, report.json, loss_curve.csv
// and config.toml.
void cmd_train(const RunConfig& config, const std::filesystem::path& data_dir, Method method,
               const std::filesystem::path& out);

// Personalises a generic checkpoint to the held-out subject (KT methods).
void cmd_personalize(const RunConfig& config, const std::filesystem::path& data_dir,
                     const std::filesystem::path& generic_checkpoint, Method method, double fraction,
                     const std::filesystem::path& out);

// Test-split metrics and traces of one checkpoint on the held-out subject.
void cmd_evaluate(const RunConfig& config, const std::filesystem::path& data_dir,
                  const std::filesystem::path& checkpoint, const std::filesystem::path& out);

// Full experiment matrix. Without `data_dir` the dataset is generated and
// preprocessed in memory; a raw dataset is preprocessed in memory. Results
// go to <out_root>/run-<hash>, where the hash covers the resolved
// configuration and the input data. Returns that directory.
std::filesystem::path cmd_experiment(const RunConfig& config,
                                     const std::optional<std::filesystem::path>& data_dir,
                                     const std::filesystem::path& out_root, int jobs);

}  // namespace pimtl
