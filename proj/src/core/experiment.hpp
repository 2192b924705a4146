// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Method x seed x fraction experiment matrix over an envelope dataset.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eval.hpp"
#include "training.hpp"

namespace pimtl {

struct ExperimentConfig {
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  Scenario scenario = Scenario::kMultiple;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<double> fractions{1.0};
  int heldout = 0;             // subject id; 0 picks the last subject
  double physics_scale = 1.0;  // multiplies I, b, m and the moment arms seen by the physics loss

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

struct ExperimentResult {
  std::vector<EvaluationRecord> records;
  std::vector<LossCurve> curves;
};

using ProgressFn = std::function<void(const std::string&)>;

// Deterministic for (dataset, configs) regardless of `jobs`. Records are
// ordered by seed, then generic subject set, then method, then fraction.
// CNN-1 / Pi-CNN-1 do not use held-out data and are reported once per seed
// with fraction 1. In the single scenario every other subject is used in
// turn as the one generic subject.
ExperimentResult run_experiment(const Dataset& envelope, const ExperimentConfig& experiment,
                                const TrainConfig& training, int jobs, const ProgressFn& progress = {});

}  // namespace pimtl
