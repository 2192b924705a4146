// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "checkpoint.hpp"
#include "io_util.hpp"

namespace pimtl {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kCnn1: return "CNN-1";
    case Method::kCnn2: return "CNN-2";
    case Method::kCnnKt: return "CNN-KT";
    case Method::kPiCnn1: return "Pi-CNN-1";
    case Method::kPiCnn2: return "Pi-CNN-2";
    case Method::kPiCnnKt: return "Pi-CNN-KT";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (method_name(m) == name) return m;
  }
  fail(ErrorCode::kConfig, "unknown method '" + std::string(name) +
                               "' (expected CNN-1, CNN-2, CNN-KT, Pi-CNN-1, Pi-CNN-2 or Pi-CNN-KT)");
}

bool method_uses_physics(Method m) {
  return m == Method::kPiCnn1 || m == Method::kPiCnn2 || m == Method::kPiCnnKt;
}

bool method_transfers(Method m) { return m == Method::kCnnKt || m == Method::kPiCnnKt; }

TrainingDomain method_domain(Method m) {
  switch (m) {
    case Method::kCnn1:
    case Method::kPiCnn1: return TrainingDomain::kOtherSubjects;
    case Method::kCnn2:
    case Method::kPiCnn2: return TrainingDomain::kHeldoutOnly;
    default: return TrainingDomain::kOtherThenHeldout;
  }
}

Method generic_method_for(Method m) {
  return method_uses_physics(m) ? Method::kPiCnn1 : Method::kCnn1;
}

std::string_view scenario_name(Scenario s) {
  return s == Scenario::kSingle ? "single" : "multiple";
}

Scenario parse_scenario(std::string_view name) {
  if (name == "single") return Scenario::kSingle;
  if (name == "multiple") return Scenario::kMultiple;
  fail(ErrorCode::kConfig, "unknown scenario '" + std::string(name) + "' (expected single or multiple)");
}

double MethodConfig::effective_lambda(double physics_weight) const {
  validate();
  return method_uses_physics(method) ? lambda.value_or(physics_weight) : 0.0;
}

void MethodConfig::validate() const {
  if (!lambda) return;
  require(std::isfinite(*lambda) && *lambda >= 0.0, ErrorCode::kConfig, "lambda must be finite and >= 0");
  if (!method_uses_physics(method)) {
    require(*lambda == 0.0, ErrorCode::kConfig,
            std::string(method_name(method)) + " is a plain CNN method; lambda must be 0");
  } else {
    require(*lambda > 0.0, ErrorCode::kConfig,
            std::string(method_name(method)) + " is physics-informed; lambda must be > 0");
  }
}

void SplitSpec::validate() const {
  require(train > 0.0 && val >= 0.0 && test > 0.0, ErrorCode::kConfig,
          "split fractions must be positive (val may be 0)");
  require(std::abs(train + val + test - 1.0) < 1e-9, ErrorCode::kConfig, "split fractions must sum to 1");
}

void TrainConfig::validate() const {
  require(max_iter >= 0, ErrorCode::kConfig, "training.max_iter must be >= 0");
  require(lr > 0.0 && std::isfinite(lr), ErrorCode::kConfig, "training.lr must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::kConfig, "training.momentum must be in [0, 1)");
  require(bn_recalibrate >= 1, ErrorCode::kConfig, "training.bn_recalibrate must be >= 1");
  require(grad_clip >= 0.0, ErrorCode::kConfig, "training.grad_clip must be >= 0");
  require(segment >= kMinPhysicsSegment, ErrorCode::kConfig,
          "training.segment must be >= " + std::to_string(kMinPhysicsSegment));
  require(physics_weight > 0.0 && std::isfinite(physics_weight), ErrorCode::kConfig,
          "training.physics_weight must be > 0");
  require(patience >= 1, ErrorCode::kConfig, "training.patience must be >= 1");
  require(min_delta >= 0.0, ErrorCode::kConfig, "training.min_delta must be >= 0");
  require(val_every >= 1, ErrorCode::kConfig, "training.val_every must be >= 1");
  require(val_segments >= 1, ErrorCode::kConfig, "training.val_segments must be >= 1");
  split.validate();
  model.validate();
}

TrialSplit split_trial(std::size_t samples, const SplitSpec& spec) {
  TrialSplit s;
  s.samples = samples;
  s.train_end = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(samples) + 1e-9));
  s.val_end = static_cast<std::size_t>(
      std::floor((spec.train + spec.val) * static_cast<double>(samples) + 1e-9));
  s.val_end = std::clamp(s.val_end, s.train_end, samples);
  return s;
}

SubjectData prepare_subject(const SubjectRecord& record, std::size_t window, const SplitSpec& split) {
  split.validate();
  SubjectData s;
  s.id = record.params.id;
  s.dyn = record.params.dyn;
  s.arms = record.params.arms;
  require(!record.trials.empty(), ErrorCode::kData,
          "subject " + std::to_string(s.id) + " has no trials");
  for (const Trial& t : record.trials) {
    s.trials.push_back(make_windows(t, window, 1));
    s.splits.push_back(split_trial(t.samples(), split));
    s.angle.push_back(t.angle);
  }
  return s;
}

std::string split_hash(const std::vector<const SubjectData*>& subjects) {
  std::ostringstream os;
  for (const SubjectData* s : subjects) {
    os << s->id << ':';
    for (const TrialSplit& t : s->splits) os << t.train_end << ',' << t.val_end << ',' << t.samples << ';';
  }
  return fnv1a_hex(os.str());
}

std::vector<std::size_t> segment_starts(const SubjectData& s, std::size_t trial, Block block,
                                        std::size_t length, double fraction) {
  const TrialSplit& sp = s.splits.at(trial);
  const WindowBatch& wb = s.trials.at(trial);
  std::size_t lo = 0, hi = 0;
  switch (block) {
    case Block::kTrain:
      hi = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(sp.train_end) - 1e-9));
      hi = std::min(hi, sp.train_end);
      break;
    case Block::kVal:
      lo = sp.train_end;
      hi = sp.val_end;
      break;
    case Block::kTest:
      lo = sp.val_end;
      hi = sp.samples;
      break;
  }
  // Window i covers samples [i, i + W); a segment starting at i reads up to
  // sample i + length - 1 + W - 1.
  std::vector<std::size_t> out;
  const std::size_t span = length + wb.width - 1;
  if (hi < lo + span) return out;
  for (std::size_t i = lo; i + span <= hi && i + length <= wb.count; ++i) out.push_back(i);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Candidate {
  std::size_t trial;
  std::size_t start;
};

std::vector<double> loss_weights(const PiCnnModel& model, bool standardized) {
  if (!standardized) return {};
  std::vector<double> w(model.scaling.scale.size());
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = 1.0 / (model.scaling.scale[j] * model.scaling.scale[j]);
  return w;
}

void standardize(PiCnnModel& model, const std::vector<const SubjectData*>& subjects, double fraction) {
  const std::size_t outs = model.config().outputs;
  std::vector<double> sum(outs, 0.0), sq(outs, 0.0);
  double n = 0.0;
  for (const SubjectData* s : subjects) {
    for (std::size_t t = 0; t < s->trials.size(); ++t) {
      const WindowBatch& wb = s->trials[t];
      const std::size_t hi = static_cast<std::size_t>(
          std::ceil(fraction * static_cast<double>(s->splits[t].train_end) - 1e-9));
      for (std::size_t i = 0; i < wb.count && wb.end_index[i] < hi; ++i) {
        for (std::size_t j = 0; j < outs; ++j) {
          const double v = wb.targets[i * outs + j];
          sum[j] += v;
          sq[j] += v * v;
        }
        n += 1.0;
      }
    }
  }
  if (n < 2.0) return;
  for (std::size_t j = 0; j < outs; ++j) {
    const double mean = sum[j] / n;
    const double var = std::max(0.0, sq[j] / n - mean * mean);
    model.scaling.offset[j] = mean;
    model.scaling.scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
}

// Evenly spaced validation segments across subjects and trials.
std::vector<SegmentRef> validation_segments(const std::vector<const SubjectData*>& subjects,
                                            std::size_t length, std::size_t max_count) {
  std::vector<SegmentRef> all;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    for (std::size_t t = 0; t < subjects[s]->trials.size(); ++t) {
      for (std::size_t i : segment_starts(*subjects[s], t, Block::kVal, length)) {
        all.push_back({s, t, i, length});
      }
    }
  }
  if (all.size() <= max_count) return all;
  std::vector<SegmentRef> out;
  out.reserve(max_count);
  for (std::size_t k = 0; k < max_count; ++k) out.push_back(all[k * all.size() / max_count]);
  return out;
}

// Batch-norm statistics pass over random training windows. No gradient is
// taken, so sample usage is not affected.
void calibrate(PiCnnModel& model, const std::vector<const SubjectData*>& subjects,
               const std::vector<std::vector<Candidate>>& pool, const std::vector<std::size_t>& active,
               std::size_t segment, std::mt19937_64& rng) {
  const std::size_t n = model.config().bn_calibration;
  if (n == 0 || active.empty()) return;
  const std::size_t width = model.config().window;
  const std::size_t ch = model.config().input_channels;
  nn::Tensor x({n, ch, width});
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t s = active[k % active.size()];
    std::uniform_int_distribution<std::size_t> pick(0, pool[s].size() - 1);
    const Candidate c = pool[s][pick(rng)];
    std::uniform_int_distribution<std::size_t> off(0, segment - 1);
    const auto in = subjects[s]->trials[c.trial].input(c.start + off(rng));
    std::copy(in.begin(), in.end(), x.values.begin() + static_cast<std::ptrdiff_t>(k * ch * width));
  }
  model.calibrate_norms(x);
}

double validation_loss(PiCnnModel& model, const std::vector<const SubjectData*>& subjects,
                       const std::vector<SegmentRef>& segs, double lambda,
                       std::span<const double> weights) {
  double total = 0.0;
  LossOptions opts;
  opts.lambda = lambda;
  opts.output_weights = weights;
  opts.mode = nn::Mode::kInfer;
  opts.backward = false;
  for (const SegmentRef& r : segs) {
    const SubjectData& s = *subjects[r.subject];
    total += total_loss_and_grad(model, s.trials[r.trial], r.first, r.count, s.dyn, s.arms, opts).total;
  }
  return total / static_cast<double>(segs.size());
}

// Shared optimisation loop for generic training and personalisation.
TrainReport fit(PiCnnModel& model, const std::vector<const SubjectData*>& subjects, double fraction,
                double lambda, const TrainConfig& config, std::uint64_t seed, Clock::time_point t0) {
  TrainReport rep;
  const std::size_t S = config.segment;
  std::vector<std::vector<Candidate>> pool(subjects.size());
  std::size_t total_candidates = 0;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    require(subjects[s]->trials.empty() ||
                subjects[s]->trials.front().channels == model.config().input_channels,
            ErrorCode::kCompatibility,
            "subject " + std::to_string(subjects[s]->id) + " channel count does not match the model");
    for (std::size_t t = 0; t < subjects[s]->trials.size(); ++t) {
      for (std::size_t i : segment_starts(*subjects[s], t, Block::kTrain, S, fraction)) {
        pool[s].push_back({t, i});
      }
      rep.usage.push_back({subjects[s]->id, t, 0, subjects[s]->splits[t].train_end, 0});
    }
    total_candidates += pool[s].size();
  }
  std::vector<std::size_t> active;
  for (std::size_t s = 0; s < pool.size(); ++s) {
    if (!pool[s].empty()) active.push_back(s);
  }

  std::int64_t max_steps = config.max_iter;
  if (config.unit == IterationUnit::kEpochs) max_steps *= static_cast<std::int64_t>(total_candidates);

  const std::vector<double> weights = loss_weights(model, config.standardize_targets);
  const std::vector<SegmentRef> val =
      config.early_stopping ? validation_segments(subjects, S, config.val_segments) : std::vector<SegmentRef>{};
  const bool use_val = config.early_stopping && !val.empty();

  std::mt19937_64 rng(mix_seed(seed, 0x3000));
  LossOptions opts;
  opts.lambda = lambda;
  opts.output_weights = weights;
  const nn::SgdConfig sgd{config.lr, config.momentum};

  std::vector<char> best;
  rep.best_val = std::numeric_limits<double>::infinity();
  rep.stop_reason = "max_iter";
  if (active.empty()) {
    rep.stop_reason = "no_segments";
    max_steps = 0;
  }

  std::vector<std::size_t> usage_base(subjects.size(), 0);
  for (std::size_t s = 1; s < subjects.size(); ++s) usage_base[s] = usage_base[s - 1] + subjects[s - 1]->trials.size();

  for (std::int64_t step = 0; step < max_steps; ++step) {
    const std::size_t s = active[static_cast<std::size_t>(step) % active.size()];
    const auto& cands = pool[s];
    std::uniform_int_distribution<std::size_t> pick(0, cands.size() - 1);
    const Candidate c = cands[pick(rng)];
    const SubjectData& subj = *subjects[s];
    const WindowBatch& wb = subj.trials[c.trial];

    if (step % config.bn_recalibrate == 0) calibrate(model, subjects, pool, active, S, rng);
    model.zero_grad();
    LossBreakdown lb = total_loss_and_grad(model, wb, c.start, S, subj.dyn, subj.arms, opts);
    if (!std::isfinite(lb.total)) {
      fail(ErrorCode::kDiverged, "training diverged at iteration " + std::to_string(step) +
                                     " (loss is not finite)");
    }
    rep.grad_norm.push_back(nn::clip_grad_norm(model.groups(), config.grad_clip));
    nn::sgd_momentum_step(model.groups(), sgd);
    model.note_train_step();

    SampleUsage& u = rep.usage[usage_base[s] + c.trial];
    u.max_index = std::max(u.max_index, wb.end_index[c.start + S - 1]);
    ++u.steps;
    rep.curve.push_back(std::move(lb));
    rep.steps = static_cast<int>(step + 1);

    if (use_val && (step + 1) % config.val_every == 0) {
      const double v = validation_loss(model, subjects, val, lambda, weights);
      if (!std::isfinite(v)) {
        fail(ErrorCode::kDiverged, "training diverged at iteration " + std::to_string(step) +
                                       " (validation loss is not finite)");
      }
      rep.val_steps.push_back(rep.steps);
      rep.val_loss.push_back(v);
      if (v < rep.best_val - config.min_delta) {
        rep.best_val = v;
        rep.best_step = rep.steps;
        best = encode_checkpoint(model);
      } else if (rep.steps - rep.best_step >= config.patience) {
        rep.stop_reason = "early_stop";
        break;
      }
    }
  }
  if (use_val && !best.empty() && rep.best_step != rep.steps) restore_checkpoint(model, best);
  if (!use_val) {
    rep.best_step = rep.steps;
    rep.best_val = std::numeric_limits<double>::quiet_NaN();
  }
  rep.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return rep;
}

}  // namespace

TrainResult train_generic(const std::vector<const SubjectData*>& subjects, double lambda,
                          const TrainConfig& config, std::uint64_t seed, double fraction) {
  const auto t0 = Clock::now();
  config.validate();
  require(!subjects.empty(), ErrorCode::kData, "generic training needs at least one subject");
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::kConfig, "fraction must be in (0, 1]");
  bool any = false;
  for (const SubjectData* s : subjects) {
    for (std::size_t t = 0; t < s->trials.size() && !any; ++t) {
      any = !segment_starts(*s, t, Block::kTrain, config.segment, fraction).empty();
    }
  }
  require(any, ErrorCode::kData, "training data has no usable segment of " +
                                     std::to_string(config.segment) + " windows");
  ModelConfig mc = config.model;
  mc.input_channels = subjects.front()->trials.front().channels;
  mc.outputs = mc.input_channels;
  mc.window = subjects.front()->trials.front().width;
  TrainResult res;
  res.model = std::make_unique<PiCnnModel>(mc, mix_seed(seed, 0x3001));
  if (config.standardize_targets) standardize(*res.model, subjects, fraction);
  res.report = fit(*res.model, subjects, fraction, lambda, config, seed, t0);
  return res;
}

TrainResult personalize(PiCnnModel& generic, const SubjectData& subject, double fraction, double lambda,
                        const TrainConfig& config, std::uint64_t seed) {
  const auto t0 = Clock::now();
  config.validate();
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::kConfig, "fraction must be in (0, 1]");
  require(!subject.trials.empty(), ErrorCode::kData, "subject has no trials");
  require(subject.trials.front().channels == generic.config().input_channels &&
              subject.trials.front().width == generic.config().window,
          ErrorCode::kCompatibility, "generic checkpoint is not compatible with the subject's windows");
  TrainResult res;
  res.model = clone_model(generic);
  res.model->freeze_features(true);
  for (auto& grp : res.model->groups()) {
    for (auto& v : grp.velocity) std::fill(v.begin(), v.end(), 0.0);
  }
  res.model->rng().seed(mix_seed(seed, 0x3002));
  std::vector<const SubjectData*> subjects{&subject};
  res.report = fit(*res.model, subjects, fraction, lambda, config, seed ^ 0x5bd1e995ULL, t0);
  if (res.report.stop_reason == "no_segments") {
    res.report.warnings.push_back("personalisation fraction " + format_double(fraction) +
                                  " leaves no usable training segment; parameters unchanged");
  }
  return res;
}

TestPredictions predict_test(PiCnnModel& model, const SubjectData& subject) {
  TestPredictions out;
  out.outputs = model.config().outputs;
  constexpr std::size_t kChunk = 256;
  for (std::size_t t = 0; t < subject.trials.size(); ++t) {
    const WindowBatch& wb = subject.trials[t];
    const TrialSplit& sp = subject.splits[t];
    std::size_t first = wb.count;
    for (std::size_t i = 0; i < wb.count; ++i) {
      if (wb.end_index[i] + 1 >= sp.val_end + wb.width) {
        first = i;
        break;
      }
    }
    for (std::size_t i = first; i < wb.count; i += kChunk) {
      const std::size_t n = std::min(kChunk, wb.count - i);
      const nn::Tensor y = model.forward(gather_inputs(wb, i, n), nn::Mode::kInfer);
      out.predicted.insert(out.predicted.end(), y.values.begin(), y.values.end());
      const std::vector<double> tg = gather_targets(wb, i, n);
      out.truth.insert(out.truth.end(), tg.begin(), tg.end());
      out.rows += n;
    }
  }
  return out;
}

}  // namespace pimtl
