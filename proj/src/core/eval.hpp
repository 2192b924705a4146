// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Metrics, per-output evaluation records and report emission.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "training.hpp"

namespace pimtl {

// sqrt(mean((y - yhat)^2)); kDimension on empty or mismatched input.
double rmse(std::span<const double> y, std::span<const double> yhat);
// Pearson correlation clamped to [-1, 1]; kUndefined for a constant input.
double pearson_cc(std::span<const double> y, std::span<const double> yhat);
// rmse / (max(y) - min(y)); kUndefined for zero range.
double normalized_rmse(std::span<const double> y, std::span<const double> yhat);

struct OutputMetrics {
  std::string name;  // "angle" or a muscle name
  std::string unit;  // "deg" or "N"
  double rmse = 0.0;
  double cc = 0.0;
  double nrmse = 0.0;
  bool operator==(const OutputMetrics&) const = default;
};

struct EvaluationRecord {
  std::string method;
  std::string scenario;
  std::uint64_t seed = 0;
  double fraction = 1.0;
  std::vector<int> generic_subjects;  // empty for CNN-2 / Pi-CNN-2
  int heldout = 0;
  std::string split_hash;
  std::vector<OutputMetrics> outputs;  // angle first, then muscles
  // Test-split traces in reporting units, one vector per output.
  std::vector<std::vector<double>> truth;
  std::vector<std::vector<double>> predicted;
  // Not written to metrics.csv, which must be reproducible byte for byte.
  double wall_seconds = 0.0;
  std::string timing_phase;  // "personalize" for KT methods, "full" otherwise
};

// Converts model-order predictions ([F_1..F_N, theta]) to a record ordered
// [angle, muscles...] with the angle in degrees.
EvaluationRecord evaluate_predictions(const TestPredictions& preds,
                                      const std::vector<std::string>& muscles);

// One row of the timing table: personalisation-only time for KT methods,
// full training time otherwise.
struct TimingRow {
  std::string method;
  std::string scenario;
  std::uint64_t seed = 0;
  double fraction = 1.0;
  std::string phase;  // "personalize" or "full"
  double minutes = 0.0;
};

std::vector<TimingRow> timing_report(const std::vector<EvaluationRecord>& records);

struct LossCurve {
  std::string method;
  std::string scenario;
  std::uint64_t seed = 0;
  double fraction = 1.0;
  std::string phase;  // "generic" or "personalize"
  TrainReport report;
};

std::string metrics_csv(const std::vector<EvaluationRecord>& records);
// Parses metrics.csv text back into records (traces are not stored).
std::vector<EvaluationRecord> parse_metrics_csv(std::string_view text);
std::string loss_curves_csv(const std::vector<LossCurve>& curves, const std::vector<std::string>& muscles);
std::string timing_csv(const std::vector<TimingRow>& rows);
// Ground truth plus one polyline per record for output `index`.
std::string trace_svg(const std::vector<const EvaluationRecord*>& records, std::size_t index);

// Writes metrics.csv, loss_curves.csv and trace_<output>.svg. Traces use the
// records of the first (seed, fraction, heldout) combination present.
void emit_reports(const std::vector<EvaluationRecord>& records, const std::vector<LossCurve>& curves,
                  const std::vector<std::string>& muscles, const std::filesystem::path& out_dir);

}  // namespace pimtl
