// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "training.hpp"

#include "checkpoint.hpp"
#include "preprocess.hpp"
#include "test_util.hpp"

using namespace pimtl;

namespace {

struct Corpus {
  Dataset envelope;
  std::vector<SubjectData> subjects;

  Corpus() {
    SynthConfig c;
    c.subjects = 3;
    c.trials_per_subject = 1;
    c.trial_duration = 0.6;
    c.calibration_duration = 0.5;
    envelope = preprocess_dataset(generate_dataset(c, 17), EnvelopeSettings{});
    for (const auto& r : envelope.subjects) subjects.push_back(prepare_subject(r, 16, SplitSpec{}));
  }
};

const Corpus& corpus() {
  static const Corpus c;
  return c;
}

TrainConfig quick(int steps = 30) {
  TrainConfig t;
  t.max_iter = steps;
  t.early_stopping = false;
  t.bn_recalibrate = 10;
  t.model.conv_channels = 4;
  t.model.hidden = 8;
  t.model.bn_calibration = 16;
  return t;
}

}  // namespace

TEST_CASE("method names and roles") {
  for (Method m : kAllMethods) CHECK(parse_method(method_name(m)) == m);
  CHECK_ERROR_CODE(parse_method("CNN-3"), ErrorCode::kConfig);
  CHECK(method_uses_physics(Method::kPiCnnKt));
  CHECK(!method_uses_physics(Method::kCnnKt));
  CHECK(method_domain(Method::kCnn2) == TrainingDomain::kHeldoutOnly);
  CHECK(generic_method_for(Method::kPiCnnKt) == Method::kPiCnn1);
  CHECK(parse_scenario("single") == Scenario::kSingle);
  CHECK_ERROR_CODE(parse_scenario("double"), ErrorCode::kConfig);

  MethodConfig cnn{Method::kCnn1, 1.0};
  CHECK_ERROR_CODE(cnn.validate(), ErrorCode::kConfig);
  MethodConfig pi{Method::kPiCnn1, 0.0};
  CHECK_ERROR_CODE(pi.validate(), ErrorCode::kConfig);
  CHECK(MethodConfig{Method::kCnn2, {}}.effective_lambda(2.0) == 0.0);
  CHECK(MethodConfig{Method::kPiCnn2, {}}.effective_lambda(2.0) == 2.0);
}

TEST_CASE("chronological split") {
  const TrialSplit s = split_trial(2000, SplitSpec{});
  CHECK(s.train_end == 1200);
  CHECK(s.val_end == 1600);
  CHECK(s.samples == 2000);
  const TrialSplit odd = split_trial(7, SplitSpec{});
  CHECK(odd.train_end == 4);
  CHECK(odd.val_end == 5);
  CHECK_ERROR_CODE((SplitSpec{0.5, 0.2, 0.2}.validate()), ErrorCode::kConfig);
}

TEST_CASE("segments stay inside their block") {
  const SubjectData& s = corpus().subjects[0];
  const TrialSplit& sp = s.splits[0];
  const WindowBatch& wb = s.trials[0];
  for (Block b : {Block::kTrain, Block::kVal, Block::kTest}) {
    const std::size_t lo = b == Block::kTrain ? 0 : b == Block::kVal ? sp.train_end : sp.val_end;
    const std::size_t hi = b == Block::kTrain ? sp.train_end : b == Block::kVal ? sp.val_end : sp.samples;
    const auto starts = segment_starts(s, 0, b, 5);
    REQUIRE(!starts.empty());
    for (std::size_t i : starts) {
      CHECK(i >= lo);
      CHECK(wb.end_index[i + 4] < hi);
    }
    // every admissible start is listed: first window starts at lo, last sample at hi - 1
    CHECK(starts.front() == lo);
    CHECK(wb.end_index[starts.back() + 4] == hi - 1);
  }
  const auto half = segment_starts(s, 0, Block::kTrain, 5, 0.5);
  CHECK(wb.end_index[half.back() + 4] == static_cast<std::size_t>(std::ceil(0.5 * sp.train_end)) - 1);
  CHECK(segment_starts(s, 0, Block::kTrain, 5, 0.01).empty());
}

TEST_CASE("training is deterministic and only reads training samples") {
  const auto& c = corpus();
  std::vector<const SubjectData*> subs = {&c.subjects[0], &c.subjects[1]};
  TrainResult a = train_generic(subs, 1.0, quick(), 5);
  TrainResult b = train_generic(subs, 1.0, quick(), 5);
  CHECK(encode_checkpoint(*a.model) == encode_checkpoint(*b.model));
  CHECK(a.report.steps == 30);
  CHECK(a.report.curve.size() == 30);
  CHECK(a.report.stop_reason == "max_iter");
  for (const SampleUsage& u : a.report.usage) {
    CHECK(u.steps == 15);
    CHECK(u.max_index < u.train_end);
  }
  TrainResult other = train_generic(subs, 1.0, quick(), 6);
  CHECK(encode_checkpoint(*other.model) != encode_checkpoint(*a.model));

  TrainResult cnn = train_generic(subs, 0.0, quick(10), 5);
  for (const LossBreakdown& lb : cnn.report.curve) {
    CHECK(lb.l_phys == 0.0);
    CHECK(lb.total == lb.l_data);
  }
  for (const LossBreakdown& lb : a.report.curve) CHECK(lb.l_phys > 0.0);
}

TEST_CASE("zero iterations returns the initial model") {
  const auto& c = corpus();
  std::vector<const SubjectData*> subs = {&c.subjects[0]};
  TrainResult r = train_generic(subs, 1.0, quick(0), 5);
  CHECK(r.report.steps == 0);
  CHECK(r.report.curve.empty());
  CHECK(r.model->train_steps() == 0);
  TrainConfig bad = quick();
  bad.max_iter = -1;
  CHECK_ERROR_CODE(train_generic(subs, 1.0, bad, 5), ErrorCode::kConfig);
  CHECK_ERROR_CODE(train_generic({}, 1.0, quick(), 5), ErrorCode::kData);
}

TEST_CASE("personalisation leaves the feature extractor bit-identical") {
  const auto& c = corpus();
  std::vector<const SubjectData*> subs = {&c.subjects[0], &c.subjects[1]};
  TrainResult generic = train_generic(subs, 1.0, quick(), 7);
  const std::vector<char> before = encode_checkpoint(*generic.model);
  TrainResult kt = personalize(*generic.model, c.subjects[2], 1.0, 1.0, quick(), 7);
  CHECK(encode_checkpoint(*generic.model) == before);
  CHECK(kt.model->features_frozen());
  auto g = generic.model->parameters();
  auto p = kt.model->parameters();
  bool head_changed = false;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool feature = g[i].name.starts_with("conv") || g[i].name.starts_with("bn");
    if (feature) CHECK_MESSAGE(g[i].tensor->values == p[i].tensor->values, g[i].name);
    else head_changed = head_changed || g[i].tensor->values != p[i].tensor->values;
  }
  CHECK(head_changed);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(kt.model->norms()[i]->running_mean == generic.model->norms()[i]->running_mean);
    CHECK(kt.model->norms()[i]->running_var == generic.model->norms()[i]->running_var);
  }
  for (const SampleUsage& u : kt.report.usage) CHECK(u.max_index < u.train_end);
}

TEST_CASE("a fraction too small for one segment warns and keeps the generic head") {
  const auto& c = corpus();
  std::vector<const SubjectData*> subs = {&c.subjects[0]};
  TrainResult generic = train_generic(subs, 0.0, quick(10), 8);
  TrainResult kt = personalize(*generic.model, c.subjects[1], 0.01, 0.0, quick(), 8);
  CHECK(kt.report.steps == 0);
  REQUIRE(kt.report.warnings.size() == 1);
  CHECK(kt.report.warnings[0].find("fraction") != std::string::npos);
  CHECK_ERROR_CODE(personalize(*generic.model, c.subjects[1], 0.0, 0.0, quick(), 8), ErrorCode::kConfig);
}

TEST_CASE("early stopping restores the best validation checkpoint") {
  const auto& c = corpus();
  std::vector<const SubjectData*> subs = {&c.subjects[0]};
  TrainConfig t = quick(200);
  t.early_stopping = true;
  t.val_every = 5;
  t.patience = 10;
  t.lr = 0.05;
  TrainResult r = train_generic(subs, 0.0, t, 9);
  REQUIRE(!r.report.val_loss.empty());
  const double best = *std::min_element(r.report.val_loss.begin(), r.report.val_loss.end());
  CHECK(r.report.best_val == doctest::Approx(best));
  if (r.report.stop_reason == "early_stop") CHECK(r.report.steps - r.report.best_step >= t.patience);
  CHECK(r.model->train_steps() == r.report.best_step);
}

TEST_CASE("test predictions cover the test block in order") {
  const auto& c = corpus();
  std::vector<const SubjectData*> subs = {&c.subjects[0]};
  TrainResult r = train_generic(subs, 0.0, quick(5), 10);
  const SubjectData& s = c.subjects[0];
  const TestPredictions p = predict_test(*r.model, s);
  const std::size_t first = s.splits[0].val_end;
  CHECK(p.outputs == 6);
  CHECK(p.rows == s.splits[0].samples - first - 15);
  CHECK(p.truth.size() == p.rows * 6);
  // truth rows are the targets of consecutive test windows
  const WindowBatch& wb = s.trials[0];
  std::size_t i0 = 0;
  while (wb.end_index[i0] < first + 15) ++i0;
  for (std::size_t k = 0; k < p.rows; k += 17) {
    for (std::size_t j = 0; j < 6; ++j) CHECK(p.truth[k * 6 + j] == wb.target(i0 + k)[j]);
  }
}
