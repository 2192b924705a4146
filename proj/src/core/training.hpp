// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Generic training, freeze-and-fine-tune personalisation and the six
// training recipes (CNN-1, CNN-2, CNN-KT and their physics-informed
// counterparts).

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "model.hpp"
#include "synth.hpp"

namespace pimtl {

enum class Method { kCnn1, kCnn2, kCnnKt, kPiCnn1, kPiCnn2, kPiCnnKt };

inline constexpr Method kAllMethods[] = {Method::kCnn1,   Method::kCnn2,   Method::kCnnKt,
                                         Method::kPiCnn1, Method::kPiCnn2, Method::kPiCnnKt};

std::string_view method_name(Method m);
// kConfig for unknown names.
Method parse_method(std::string_view name);

bool method_uses_physics(Method m);
bool method_transfers(Method m);
// Where the trained network's data comes from.
enum class TrainingDomain { kOtherSubjects, kHeldoutOnly, kOtherThenHeldout };
TrainingDomain method_domain(Method m);
// The generic-only method whose checkpoint a KT method personalises.
Method generic_method_for(Method m);

enum class Scenario { kSingle, kMultiple };
std::string_view scenario_name(Scenario s);
Scenario parse_scenario(std::string_view name);

struct MethodConfig {
  Method method = Method::kPiCnnKt;
  std::optional<double> lambda;  // must agree with the method when given

  // Physics weight actually used: 0 for CNN-*, `physics_weight` for Pi-*.
  double effective_lambda(double physics_weight) const;
  void validate() const;
};

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;

  void validate() const;
  bool operator==(const SplitSpec&) const = default;
};

enum class IterationUnit { kSteps, kEpochs };

struct TrainConfig {
  int max_iter = 2000;
  IterationUnit unit = IterationUnit::kSteps;
  double lr = 0.001;
  double momentum = 0.9;
  double grad_clip = 10.0;        // global gradient-norm cap, 0 disables
  int bn_recalibrate = 100;       // steps between batch-norm statistics passes
  std::size_t segment = 5;        // contiguous windows per step
  double physics_weight = 1.0;    // lambda for Pi-* methods
  bool early_stopping = true;
  int patience = 200;
  double min_delta = 1e-5;
  int val_every = 25;
  std::size_t val_segments = 64;  // evenly spaced validation segments per evaluation
  bool standardize_targets = true;  // train on (y - mean) / sd of the training targets
  SplitSpec split{};
  ModelConfig model{};

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Sample boundaries of one trial's blocks: [0, train_end), [train_end,
// val_end), [val_end, samples).
struct TrialSplit {
  std::size_t train_end = 0;
  std::size_t val_end = 0;
  std::size_t samples = 0;
};

TrialSplit split_trial(std::size_t samples, const SplitSpec& spec);

// One subject, windowed and split.
struct SubjectData {
  int id = 0;
  WristDynamicsParams dyn;
  MomentArms arms;
  std::vector<WindowBatch> trials;
  std::vector<TrialSplit> splits;
  std::vector<std::vector<double>> angle;  // ground-truth per trial (rad), for reporting
};

SubjectData prepare_subject(const SubjectRecord& record, std::size_t window, const SplitSpec& split);

// Stable digest of the split boundaries of a subject set.
std::string split_hash(const std::vector<const SubjectData*>& subjects);

// Windows [first, first + count) of trial `trial` in subject `subject`.
struct SegmentRef {
  std::size_t subject = 0;
  std::size_t trial = 0;
  std::size_t first = 0;
  std::size_t count = 0;
};

enum class Block { kTrain, kVal, kTest };

// Start windows for segments of `length` windows that lie entirely inside the
// block. For kTrain, `fraction` keeps only the first ceil(fraction * train)
// samples.
std::vector<std::size_t> segment_starts(const SubjectData& s, std::size_t trial, Block block,
                                        std::size_t length, double fraction = 1.0);

// Largest trial sample index read by a gradient step, per (subject, trial).
struct SampleUsage {
  int subject = 0;
  std::size_t trial = 0;
  std::size_t max_index = 0;
  std::size_t train_end = 0;
  std::size_t steps = 0;
};

struct TrainReport {
  std::vector<LossBreakdown> curve;        // one per optimiser step
  std::vector<double> grad_norm;           // pre-clipping global gradient norm per step
  std::vector<int> val_steps;
  std::vector<double> val_loss;
  int steps = 0;
  int best_step = 0;
  double best_val = 0.0;
  std::string stop_reason;
  double wall_seconds = 0.0;
  std::vector<SampleUsage> usage;
  std::vector<std::string> warnings;
};

struct TrainResult {
  std::unique_ptr<PiCnnModel> model;
  TrainReport report;
};

// Fresh network trained on the given subjects' train blocks. Steps cycle
// through subjects round-robin; each step draws one random contiguous
// segment. kData when no subject has a usable segment; kDiverged on a
// non-finite loss.
TrainResult train_generic(const std::vector<const SubjectData*>& subjects, double lambda,
                          const TrainConfig& config, std::uint64_t seed, double fraction = 1.0);

// Copy of `generic` with the feature extractor frozen and the dense blocks
// and head fine-tuned on the first `fraction` of the subject's train blocks.
TrainResult personalize(PiCnnModel& generic, const SubjectData& subject, double fraction,
                        double lambda, const TrainConfig& config, std::uint64_t seed);

// Inference-mode predictions on the test windows of every trial, rows ordered
// by trial then time, columns as the model outputs.
struct TestPredictions {
  std::vector<double> predicted;  // rows x outputs
  std::vector<double> truth;
  std::size_t rows = 0;
  std::size_t outputs = 0;
};

TestPredictions predict_test(PiCnnModel& model, const SubjectData& subject);

}  // namespace pimtl
