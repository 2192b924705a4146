// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: prints one "criterion N: PASS|FAIL" line per criterion,
// with supporting numbers on indented lines. Exits 0 once every criterion
// has been evaluated (1 with --strict if any failed).

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "eval.hpp"
#include "log.hpp"
#include "model.hpp"
#include "nnet.hpp"
#include "pipeline.hpp"
#include "preprocess.hpp"
#include "sigproc.hpp"
#include "synth.hpp"
#include "training.hpp"

namespace fs = std::filesystem;
using namespace pimtl;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
  std::vector<std::string> details;
};

struct Options {
  fs::path work;
  bool reduced = false;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

nn::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  nn::Tensor t(std::move(shape));
  t.values = uniform(t.size(), rng);
  return t;
}

double weighted_sum(const nn::Tensor& out, const nn::Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.values[i] * w.values[i];
  return s;
}

struct GradCheck {
  double error = 0.0;
  std::size_t entries = 0;
  std::size_t kinks = 0;  // entries whose stencil changed the ReLU pattern, not compared
};

// ||analytic - fd|| / max(||analytic||, ||fd||) over the entries of x, with
// central differences of step 1e-5. When `pattern` is given, entries whose
// +-h evaluations see a different activation pattern are skipped.
GradCheck gradient_check(std::vector<double>& x, const std::vector<double>& analytic,
                         const std::function<double()>& loss,
                         const std::function<std::vector<unsigned char>()>& pattern = {}) {
  constexpr double h = 1e-5;
  GradCheck out;
  std::vector<unsigned char> base;
  if (pattern) {
    loss();
    base = pattern();
  }
  double diff = 0.0, na = 0.0, nf = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = loss();
    const bool up_kink = pattern && pattern() != base;
    x[i] = keep - h;
    const double down = loss();
    const bool down_kink = pattern && pattern() != base;
    x[i] = keep;
    if (up_kink || down_kink) {
      ++out.kinks;
      continue;
    }
    const double fd = (up - down) / (2.0 * h);
    diff += (analytic[i] - fd) * (analytic[i] - fd);
    na += analytic[i] * analytic[i];
    nf += fd * fd;
    ++out.entries;
  }
  out.error = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nf), 1e-12});
  return out;
}

double gradient_error(std::vector<double>& x, const std::vector<double>& analytic,
                      const std::function<double()>& loss) {
  return gradient_check(x, analytic, loss).error;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<SubjectData> default_subjects(const RunConfig& cfg) {
  const Dataset env = preprocess_dataset(generate_dataset(cfg.synth, cfg.seed), cfg.envelope);
  std::vector<SubjectData> out;
  for (const SubjectRecord& r : env.subjects) {
    out.push_back(prepare_subject(r, cfg.training.model.window, cfg.training.split));
  }
  return out;
}

// ------------------------------------------------------------- criterion 1

struct LayerTally {
  int instances = 0;
  int passed = 0;
  double worst = 0.0;

  void add(double err) {
    ++instances;
    if (err < 1e-4) ++passed;
    worst = std::max(worst, err);
  }
};

double conv_instance(std::mt19937_64& rng) {
  const std::size_t cin = pick(rng, 1, 4), cout = pick(rng, 1, 4), k = 2 * pick(rng, 0, 2) + 1;
  nn::Conv1d conv(cin, cout, k, pick(rng, 0, 3), pick(rng, 1, 2));
  conv.init(rng);
  const std::size_t width = pick(rng, 6, 12);
  nn::Tensor x = random_tensor({pick(rng, 1, 3), cin, width}, rng);
  const nn::Tensor w = random_tensor({x.dim(0), cout, conv.output_width(width)}, rng);
  auto loss = [&] { return weighted_sum(conv.forward(x), w); };
  conv.weight.zero_grad();
  conv.bias.zero_grad();
  conv.forward(x);
  const nn::Tensor gx = conv.backward(w, true);
  const auto gw = conv.weight.grad, gb = conv.bias.grad;
  return std::max({gradient_error(x.values, gx.values, loss), gradient_error(conv.weight.values, gw, loss),
                   gradient_error(conv.bias.values, gb, loss)});
}

double dense_instance(std::mt19937_64& rng) {
  const std::size_t din = pick(rng, 1, 8), dout = pick(rng, 1, 6);
  nn::Dense dense(din, dout);
  dense.init(rng);
  nn::Tensor x = random_tensor({pick(rng, 1, 4), din}, rng);
  const nn::Tensor w = random_tensor({x.dim(0), dout}, rng);
  auto loss = [&] { return weighted_sum(dense.forward(x), w); };
  dense.weight.zero_grad();
  dense.bias.zero_grad();
  dense.forward(x);
  const nn::Tensor gx = dense.backward(w, true);
  const auto gw = dense.weight.grad, gb = dense.bias.grad;
  return std::max({gradient_error(x.values, gx.values, loss), gradient_error(dense.weight.values, gw, loss),
                   gradient_error(dense.bias.values, gb, loss)});
}

double batchnorm_instance(std::mt19937_64& rng, nn::NormStats stats) {
  const std::size_t c = pick(rng, 1, 4);
  nn::BatchNorm bn(c);
  bn.gamma.values = uniform(c, rng, 0.5, 1.5);
  bn.beta.values = uniform(c, rng);
  if (stats != nn::NormStats::kBatch) {
    bn.running_mean = uniform(c, rng);
    bn.running_var = uniform(c, rng, 0.5, 2.0);
    bn.stats_initialized = true;
  }
  nn::Tensor x = random_tensor({pick(rng, 2, 4), c, pick(rng, 3, 6)}, rng);
  const nn::Tensor w = random_tensor(x.shape, rng);
  nn::BatchNorm probe_params = bn;
  auto loss = [&] {
    nn::BatchNorm probe = bn;
    probe.gamma.values = probe_params.gamma.values;
    probe.beta.values = probe_params.beta.values;
    return weighted_sum(probe.forward(x, stats), w);
  };
  nn::BatchNorm run = bn;
  run.gamma.zero_grad();
  run.beta.zero_grad();
  run.forward(x, stats);
  const nn::Tensor gx = run.backward(w);
  return std::max({gradient_error(x.values, gx.values, loss),
                   gradient_error(probe_params.gamma.values, run.gamma.grad, loss),
                   gradient_error(probe_params.beta.values, run.beta.grad, loss)});
}

double layernorm_instance(std::mt19937_64& rng) {
  const std::size_t d = pick(rng, 2, 8);
  nn::LayerNorm ln(d);
  ln.gamma.values = uniform(d, rng, 0.5, 1.5);
  ln.beta.values = uniform(d, rng);
  nn::Tensor x = random_tensor({pick(rng, 1, 4), d}, rng);
  const nn::Tensor w = random_tensor(x.shape, rng);
  auto loss = [&] {
    nn::LayerNorm probe = ln;
    return weighted_sum(probe.forward(x), w);
  };
  ln.gamma.zero_grad();
  ln.beta.zero_grad();
  ln.forward(x);
  const nn::Tensor gx = ln.backward(w);
  const auto gg = ln.gamma.grad, gb = ln.beta.grad;
  return std::max({gradient_error(x.values, gx.values, loss), gradient_error(ln.gamma.values, gg, loss),
                   gradient_error(ln.beta.values, gb, loss)});
}

double relu_instance(std::mt19937_64& rng) {
  nn::Relu relu;
  nn::Tensor x = random_tensor({pick(rng, 1, 4), pick(rng, 1, 8)}, rng);
  const nn::Tensor w = random_tensor(x.shape, rng);
  auto loss = [&] {
    nn::Relu probe;
    return weighted_sum(probe.forward(x), w);
  };
  relu.forward(x);
  const nn::Tensor gx = relu.backward(w);
  return gradient_error(x.values, gx.values, loss);
}

double dropout_instance(std::mt19937_64& rng) {
  const double rate = std::uniform_real_distribution<double>(0.1, 0.7)(rng);
  const bool shared = pick(rng, 0, 1) == 1, per_channel = pick(rng, 0, 1) == 1;
  nn::Tensor x = random_tensor({pick(rng, 1, 4), pick(rng, 1, 4), pick(rng, 2, 6)}, rng);
  const nn::Tensor w = random_tensor(x.shape, rng);
  const std::mt19937_64 mask_rng(rng());
  auto loss = [&] {
    nn::Dropout probe(rate, shared, per_channel);
    std::mt19937_64 r = mask_rng;
    return weighted_sum(probe.forward(x, nn::Mode::kTrain, r), w);
  };
  nn::Dropout drop(rate, shared, per_channel);
  std::mt19937_64 r = mask_rng;
  drop.forward(x, nn::Mode::kTrain, r);
  const nn::Tensor gx = drop.backward(w);
  return gradient_error(x.values, gx.values, loss);
}

// Composite loss on a small network with dropout active; the model RNG is
// restored before every evaluation so all evaluations share one mask.
double composite_instance(std::mt19937_64& rng, double lambda, int index,
                          std::pair<std::size_t, std::size_t>& kink_tally) {
  PopulationConfig pop;
  const SubjectParams subject = sample_subject(pop, index % 8, 100 + index);
  ExcitationProfile profile;
  profile.duration = 0.15;
  profile.phase = uniform(1, rng)[0];
  Trial trial = simulate_trial(subject, profile, 1000.0);
  trial.emg = Matrix(trial.samples(), subject.muscles());
  for (std::size_t k = 0; k < trial.samples(); ++k) {
    for (std::size_t n = 0; n < subject.muscles(); ++n) {
      trial.emg(k, n) = trial.forces(k, n) / subject.fmax[n] + 0.05 * uniform(1, rng)[0];
    }
  }
  const WindowBatch batch = make_windows(trial, 16, 1);

  ModelConfig mc;
  mc.conv_channels = 4;
  mc.hidden = 8;
  mc.bn_calibration = 32;
  PiCnnModel model(mc, rng());
  model.calibrate_norms(gather_inputs(batch, 0, 32));
  model.set_norm_override(nn::NormStats::kRunning);
  const std::size_t start = pick(rng, 0, batch.count - 5);
  const std::mt19937_64 saved = model.rng();
  LossOptions opt;
  opt.lambda = lambda;
  auto loss = [&] {
    model.rng() = saved;
    LossOptions o = opt;
    o.backward = false;
    return total_loss_and_grad(model, batch, start, 5, subject.dyn, subject.arms, o).total;
  };
  model.rng() = saved;
  model.zero_grad();
  total_loss_and_grad(model, batch, start, 5, subject.dyn, subject.arms, opt);
  auto pattern = [&] { return model.relu_pattern(); };
  double worst = 0.0;
  for (auto& p : model.parameters()) {
    const std::vector<double> analytic = p.tensor->grad;
    const GradCheck g = gradient_check(p.tensor->values, analytic, loss, pattern);
    worst = std::max(worst, g.error);
    kink_tally.first += g.kinks;
    kink_tally.second += g.kinks + g.entries;
  }
  return worst;
}

Outcome criterion1(const Options&) {
  std::mt19937_64 rng(20261017);
  std::vector<std::pair<std::string, LayerTally>> rows;
  auto run = [&](const std::string& name, const std::function<double(int)>& instance) {
    LayerTally t;
    for (int i = 0; i < 20; ++i) t.add(instance(i));
    rows.emplace_back(name, t);
  };
  run("conv1d", [&](int) { return conv_instance(rng); });
  run("dense", [&](int) { return dense_instance(rng); });
  run("batchnorm/batch", [&](int) { return batchnorm_instance(rng, nn::NormStats::kBatch); });
  run("batchnorm/running", [&](int) { return batchnorm_instance(rng, nn::NormStats::kRunning); });
  run("layernorm", [&](int) { return layernorm_instance(rng); });
  run("relu", [&](int) { return relu_instance(rng); });
  run("dropout", [&](int) { return dropout_instance(rng); });
  std::pair<std::size_t, std::size_t> kinks0{0, 0}, kinks1{0, 0};
  run("composite lambda=0", [&](int i) { return composite_instance(rng, 0.0, i, kinks0); });
  run("composite lambda=1", [&](int i) { return composite_instance(rng, 1.0, i, kinks1); });

  Outcome o;
  o.pass = true;
  double worst = 0.0;
  int instances = 0;
  for (const auto& [name, t] : rows) {
    o.pass = o.pass && t.passed == t.instances;
    worst = std::max(worst, t.worst);
    instances += t.instances;
    o.details.push_back(name + ": " + std::to_string(t.passed) + "/" + std::to_string(t.instances) +
                        " instances, worst relative error " + fmt(t.worst, 3));
  }
  for (const auto& [lambda, k] : {std::pair{0, kinks0}, std::pair{1, kinks1}}) {
    o.details.push_back("composite lambda=" + std::to_string(lambda) + ": " + std::to_string(k.first) + " of " +
                        std::to_string(k.second) + " parameter entries skipped (ReLU kink inside the stencil)");
  }
  o.summary = std::to_string(instances) + " instances over " + std::to_string(rows.size()) +
              " checks, worst relative error " + fmt(worst, 3) + " (limit 1e-4)";
  return o;
}

// ------------------------------------------------------------- criterion 2

Outcome criterion2(const Options&) {
  const RunConfig cfg;
  const Dataset raw = generate_dataset(cfg.synth, cfg.seed);
  double worst_loss = 0.0, worst_ratio = std::numeric_limits<double>::infinity();
  Outcome o;
  for (const SubjectRecord& rec : raw.subjects) {
    double subject_loss = 0.0, subject_ratio = std::numeric_limits<double>::infinity();
    for (int k = 0; k < cfg.synth.trials_per_subject; ++k) {
      const ExcitationProfile p =
          sample_profile(cfg.synth.excitation, rec.params, k, cfg.synth.trial_duration);
      auto loss_at = [&](double rate) {
        const Trial t = simulate_trial(rec.params, p, rate);
        return physics_loss({t.angle, t.forces.data, rec.params.muscles(), 1.0 / rate}, rec.params.dyn,
                            rec.params.arms);
      };
      const double l1 = loss_at(1000.0), l4 = loss_at(4000.0);
      subject_loss = std::max(subject_loss, l1);
      subject_ratio = std::min(subject_ratio, l1 / l4);
    }
    worst_loss = std::max(worst_loss, subject_loss);
    worst_ratio = std::min(worst_ratio, subject_ratio);
    o.details.push_back("subject " + std::to_string(rec.params.id) + ": max loss at 1000 Hz " +
                        fmt(subject_loss, 3) + ", min 1000/4000 Hz ratio " + fmt(subject_ratio, 4));
  }
  o.pass = worst_loss <= 1e-6 && worst_ratio >= 10.0;
  o.summary = "max physics loss " + fmt(worst_loss, 3) + " (limit 1e-6), min reduction " + fmt(worst_ratio, 4) +
              "x (limit 10x)";
  return o;
}

// ------------------------------------------------------------- criterion 3

Outcome criterion3(const Options&) {
  const RunConfig cfg;
  const std::vector<SubjectData> subjects = default_subjects(cfg);
  std::vector<const SubjectData*> generic_set;
  for (std::size_t i = 0; i + 1 < subjects.size(); ++i) generic_set.push_back(&subjects[i]);
  const double lambda = cfg.training.physics_weight;
  TrainResult generic = train_generic(generic_set, lambda, cfg.training, 1);
  const std::vector<char> checkpoint = encode_checkpoint(*generic.model);

  TrainConfig tc = cfg.training;
  tc.max_iter = 2000;
  tc.early_stopping = false;
  TrainResult personal = personalize(*generic.model, subjects.back(), 1.0, lambda, tc, 1);
  const auto reference = decode_checkpoint(checkpoint);

  std::map<std::string, nn::Tensor*> before, after;
  for (auto& p : reference->parameters()) before[p.name] = p.tensor;
  for (auto& p : personal.model->parameters()) after[p.name] = p.tensor;
  bool frozen_equal = true, stats_equal = true, dense_differ = true;
  int frozen_count = 0, dense_count = 0;
  std::vector<std::string> unchanged;
  for (const auto& p : reference->group(kFeatureGroup).params) {
    frozen_equal = frozen_equal && before.at(p.name)->values == after.at(p.name)->values;
    ++frozen_count;
  }
  const auto ref_norms = reference->norms(), new_norms = personal.model->norms();
  for (std::size_t i = 0; i < ref_norms.size(); ++i) {
    stats_equal = stats_equal && ref_norms[i]->running_mean == new_norms[i]->running_mean &&
                  ref_norms[i]->running_var == new_norms[i]->running_var;
  }
  for (const auto& p : reference->group(kSubjectGroup).params) {
    if (before.at(p.name)->values == after.at(p.name)->values) {
      dense_differ = false;
      unchanged.push_back(p.name);
    }
    ++dense_count;
  }
  Outcome o;
  o.pass = frozen_equal && stats_equal && dense_differ && personal.report.steps == 2000;
  o.summary = std::to_string(frozen_count) + " feature tensors " + (frozen_equal ? "bit-equal" : "CHANGED") +
              ", batch-norm statistics " + (stats_equal ? "bit-equal" : "CHANGED") + ", " +
              std::to_string(dense_count) + " subject-specific tensors " +
              (dense_differ ? "all changed" : "NOT all changed") + " after " +
              std::to_string(personal.report.steps) + " personalisation steps";
  o.details.push_back("generic Pi-CNN-1 on subjects 1-" + std::to_string(generic_set.size()) + ": " +
                      std::to_string(generic.report.steps) + " steps (" + generic.report.stop_reason + ")");
  for (const auto& name : unchanged) o.details.push_back(name + " unchanged");
  return o;
}

// ----------------------------------------------------- criteria 4, 5 and 7

RunConfig experiment_base(const Options& opt) {
  RunConfig cfg;
  if (opt.reduced) {
    cfg.synth.subjects = 3;
    cfg.synth.trials_per_subject = 1;
    cfg.synth.trial_duration = 2.0;
  }
  return cfg;
}

struct MatrixRun {
  // angle RMSE (deg) and wall seconds, keyed by (method, seed), one entry per held-out subject
  std::map<std::pair<std::string, std::uint64_t>, std::vector<double>> rmse;
  std::map<std::pair<std::string, std::uint64_t>, std::vector<double>> seconds;
  std::vector<std::uint64_t> seeds;
  int heldouts = 0;
  double wall = 0.0;
  std::string error;
};

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::istringstream in(read_file(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    rows.push_back(std::move(f));
  }
  return rows;
}

// The default experiment once per held-out subject, sequentially.
const MatrixRun& matrix_run(const Options& opt) {
  static MatrixRun run;
  static bool done = false;
  if (done) return run;
  done = true;
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig base = experiment_base(opt);
  run.seeds = base.experiment.seeds;
  run.heldouts = base.synth.subjects;
  try {
    for (int held = 1; held <= base.synth.subjects; ++held) {
      const RunConfig cfg = config_with_value(base, "experiment.heldout", std::to_string(held));
      const fs::path dir = cmd_experiment(cfg, std::nullopt, opt.work / "matrix" / std::to_string(held), 1);
      for (const EvaluationRecord& r : parse_metrics_csv(read_file(dir / "metrics.csv"))) {
        run.rmse[{r.method, r.seed}].push_back(r.outputs.front().rmse);
      }
      for (const auto& f : read_csv_rows(dir / "timing.csv")) {
        run.seconds[{f.at(0), std::stoull(f.at(2))}].push_back(60.0 * std::stod(f.at(5)));
      }
      std::cerr << "held-out subject " << held << " done\n";
    }
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

std::string scale_note(const MatrixRun& run) {
  return std::to_string(run.heldouts) + " subjects, each held out in turn, " + std::to_string(run.seeds.size()) +
         " seeds";
}

Outcome criterion4(const Options& opt) {
  const MatrixRun& run = matrix_run(opt);
  require(run.error.empty(), ErrorCode::kInternal, run.error);
  Outcome o;
  int good = 0;
  const std::vector<std::string> methods = {"CNN-1", "CNN-2", "CNN-KT", "Pi-CNN-1", "Pi-CNN-2", "Pi-CNN-KT"};
  for (std::uint64_t seed : run.seeds) {
    std::map<std::string, double> med;
    for (const auto& m : methods) med[m] = median(run.rmse.at({m, seed}));
    const bool kt = med["Pi-CNN-KT"] < med["CNN-KT"];
    const bool scratch = med["Pi-CNN-KT"] < med["CNN-2"];
    bool worst = true;
    for (const auto& m : methods) worst = worst && (m == "CNN-1" || med[m] < med["CNN-1"]);
    const bool ok = kt && scratch && worst;
    good += ok ? 1 : 0;
    std::string line = "seed " + std::to_string(seed) + " median angle RMSE (deg):";
    for (const auto& m : methods) line += " " + m + " " + fmt(med[m]);
    line += std::string(" | PiKT<CNNKT ") + (kt ? "yes" : "no") + ", PiKT<CNN2 " + (scratch ? "yes" : "no") +
            ", CNN-1 worst " + (worst ? "yes" : "no");
    o.details.push_back(line);
  }
  o.pass = good >= 4;
  o.summary = "ordering holds in " + std::to_string(good) + "/" + std::to_string(run.seeds.size()) +
              " seeds (need 4); " + scale_note(run) + ", " + fmt(run.wall / 60.0, 3) + " min";
  return o;
}

Outcome criterion5(const Options& opt) {
  const MatrixRun& run = matrix_run(opt);
  require(run.error.empty(), ErrorCode::kInternal, run.error);
  Outcome o;
  int good = 0;
  for (std::uint64_t seed : run.seeds) {
    const double pi = median(run.rmse.at({"Pi-CNN-1", seed})), cnn = median(run.rmse.at({"CNN-1", seed}));
    good += pi < cnn ? 1 : 0;
    o.details.push_back("seed " + std::to_string(seed) + ": Pi-CNN-1 " + fmt(pi) + " deg, CNN-1 " + fmt(cnn) +
                        " deg (median over held-out subjects)");
  }
  o.pass = good >= 4;
  o.summary = "Pi-CNN-1 below CNN-1 in " + std::to_string(good) + "/" + std::to_string(run.seeds.size()) +
              " seeds (need 4)";
  return o;
}

Outcome criterion7(const Options& opt) {
  const MatrixRun& run = matrix_run(opt);
  require(run.error.empty(), ErrorCode::kInternal, run.error);
  Outcome o;
  int good = 0;
  for (std::uint64_t seed : run.seeds) {
    const double full = median(run.seconds.at({"Pi-CNN-1", seed}));
    const double cnn_kt = median(run.seconds.at({"CNN-KT", seed}));
    const double pi_kt = median(run.seconds.at({"Pi-CNN-KT", seed}));
    const bool ok = std::max(cnn_kt, pi_kt) < full;
    good += ok ? 1 : 0;
    o.details.push_back("seed " + std::to_string(seed) + ": personalisation CNN-KT " + fmt(cnn_kt, 3) +
                        " s, Pi-CNN-KT " + fmt(pi_kt, 3) + " s; Pi-CNN-1 full training " + fmt(full, 3) +
                        " s (medians)");
  }
  o.pass = good == static_cast<int>(run.seeds.size());
  o.summary = "KT personalisation faster than Pi-CNN-1 training in " + std::to_string(good) + "/" +
              std::to_string(run.seeds.size()) + " seeds";
  return o;
}

// ------------------------------------------------------------- criterion 6

Outcome criterion6(const Options& opt) {
  RunConfig cfg = experiment_base(opt);
  cfg = config_with_value(cfg, "experiment.methods", "[\"Pi-CNN-KT\"]");
  cfg = config_with_value(cfg, "experiment.fractions", "[0.2, 0.4, 0.6, 0.8]");
  const fs::path dir = cmd_experiment(cfg, std::nullopt, opt.work / "fractions", 1);
  std::map<double, std::vector<double>> by_fraction;
  for (const EvaluationRecord& r : parse_metrics_csv(read_file(dir / "metrics.csv"))) {
    if (r.method == "Pi-CNN-KT") by_fraction[r.fraction].push_back(r.outputs.front().rmse);
  }
  Outcome o;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& [f, v] : by_fraction) {
    const double m = median(v);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    std::string line = "fraction " + fmt(f, 2) + ": median " + fmt(m) + " deg over seeds [";
    for (std::size_t i = 0; i < v.size(); ++i) line += (i ? " " : "") + fmt(v[i]);
    o.details.push_back(line + "]");
  }
  const double variation = (hi - lo) / lo;
  o.pass = by_fraction.size() == 4 && variation < 0.3;
  o.summary = "Pi-CNN-KT median angle RMSE varies by " + fmt(100.0 * variation, 3) +
              "% ((max - min) / min) across 4 fractions (limit 30%)";
  return o;
}

// ------------------------------------------------------------- criterion 8

Outcome criterion8(const Options&) {
  Outcome o;
  int passed = 0, total = 0;
  auto check = [&](bool ok, const std::string& what) {
    ++total;
    passed += ok ? 1 : 0;
    if (!ok) o.details.push_back("failed: " + what);
  };
  auto throws = [](const std::function<void()>& f, ErrorCode code) {
    try {
      f();
    } catch (const Error& e) {
      return e.code() == code;
    }
    return false;
  };
  std::mt19937_64 rng(8);
  const std::vector<double> y = uniform(100, rng), z = uniform(100, rng), yh = uniform(100, rng);

  check(rmse(y, y) == 0.0, "rmse(y, y) == 0");
  check(std::abs(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}) - std::sqrt(12.5)) < 1e-12,
        "rmse([0,0],[3,4]) == sqrt(12.5)");
  check(rmse(y, yh) == rmse(yh, y), "rmse symmetry");
  check(rmse(y, yh) <= rmse(y, z) + rmse(z, yh), "rmse triangle bound");
  check(throws([&] { rmse(y, std::vector<double>{1.0}); }, ErrorCode::kDimension), "rmse length mismatch");
  check(throws([&] { rmse(std::vector<double>{}, std::vector<double>{}); }, ErrorCode::kDimension),
        "rmse empty input");

  std::vector<double> affine(y.size()), neg(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    affine[i] = 2.0 * y[i] + 3.0;
    neg[i] = -y[i];
  }
  check(std::abs(pearson_cc(y, affine) - 1.0) < 1e-12, "pearson(y, 2y + 3) == 1");
  check(std::abs(pearson_cc(y, neg) + 1.0) < 1e-12, "pearson(y, -y) == -1");
  double my = 0.0, mh = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    my += y[i] / 100.0;
    mh += yh[i] / 100.0;
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sxy += (y[i] - my) * (yh[i] - mh);
    sxx += (y[i] - my) * (y[i] - my);
    syy += (yh[i] - mh) * (yh[i] - mh);
  }
  check(std::abs(pearson_cc(y, yh) - sxy / (std::sqrt(sxx) * std::sqrt(syy))) < 1e-12,
        "pearson matches the two-pass oracle");
  std::vector<double> ty(y.size()), th(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    ty[i] = 0.25 * y[i] - 7.0;
    th[i] = 40.0 * yh[i] + 1.5;
  }
  check(std::abs(pearson_cc(ty, yh) - pearson_cc(y, yh)) < 1e-12, "pearson affine invariance in y");
  check(std::abs(pearson_cc(y, th) - pearson_cc(y, yh)) < 1e-12, "pearson affine invariance in yhat");
  check(throws([&] { pearson_cc(std::vector<double>(y.size(), 2.0), y); }, ErrorCode::kUndefined),
        "pearson constant input");

  check(normalized_rmse(y, y) == 0.0, "nrmse(y, y) == 0");
  std::vector<double> cy(y.size()), ch(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    cy[i] = 3.7 * y[i];
    ch[i] = 3.7 * yh[i];
  }
  check(std::abs(normalized_rmse(cy, ch) - normalized_rmse(y, yh)) < 1e-12, "nrmse scale invariance");
  const std::vector<double> unit_y = {0.0, 1.0}, unit_h = {3.0, 4.0};
  check(std::abs(normalized_rmse(unit_y, unit_h) - rmse(unit_y, unit_h)) < 1e-12, "nrmse with unit range");
  check(throws([&] { normalized_rmse(std::vector<double>(5, 1.0), std::vector<double>(5, 2.0)); },
               ErrorCode::kUndefined),
        "nrmse zero range");

  o.pass = passed == total;
  o.summary = std::to_string(passed) + "/" + std::to_string(total) + " metric checks";
  return o;
}

// ------------------------------------------------------------- criterion 9

Outcome criterion9(const Options&) {
  Outcome o;
  const double fs = 1000.0, fc = 6.0;
  const BiquadCascade lp = design_butterworth(FilterKind::kLowpass, 4, fc, fs);
  const double dc = std::abs(lp.response(0.0, fs));
  const double at_fc = lp.magnitude_db(fc, fs);
  const double at_10fc = lp.magnitude_db(10.0 * fc, fs);
  // steady-state amplitude of a filtered tone at fc
  BiquadCascade run = lp;
  run.reset();
  const std::size_t n = 20000;
  std::vector<double> tone(n);
  for (std::size_t i = 0; i < n; ++i) tone[i] = std::sin(2.0 * std::numbers::pi * fc * static_cast<double>(i) / fs);
  run.process(tone);
  double peak = 0.0;
  for (std::size_t i = n / 2; i < n; ++i) peak = std::max(peak, std::abs(tone[i]));
  const double measured_db = 20.0 * std::log10(peak);
  const bool filter_ok = std::abs(dc - 1.0) <= 1e-6 && std::abs(at_fc + 3.0) <= 0.5 && at_10fc <= -40.0 &&
                         std::abs(measured_db - at_fc) < 0.05;
  o.details.push_back("lowpass order 4, fc 6 Hz, fs 1000 Hz: |H(0)| = " + fmt(dc, 12) + ", |H(fc)| = " +
                      fmt(at_fc) + " dB (tone measured " + fmt(measured_db) + " dB), |H(10 fc)| = " +
                      fmt(at_10fc) + " dB");

  const RunConfig cfg;
  const Dataset raw = generate_dataset(cfg.synth, cfg.seed);
  const Dataset env = preprocess_dataset(raw, cfg.envelope);
  double worst = 1.0;
  for (const SubjectRecord& rec : env.subjects) {
    double subject_worst = 1.0;
    for (const Trial& t : rec.trials) {
      for (std::size_t c = 0; c < t.emg.cols; ++c) {
        subject_worst = std::min(subject_worst, correlation(t.emg.column(c), t.activation.column(c)));
      }
    }
    worst = std::min(worst, subject_worst);
    o.details.push_back("subject " + std::to_string(rec.params.id) + ": min envelope/activation correlation " +
                        fmt(subject_worst));
  }
  o.pass = filter_ok && worst >= 0.95;
  o.summary = std::string("Butterworth tolerances ") + (filter_ok ? "met" : "NOT met") +
              ", min envelope/activation correlation " + fmt(worst) + " over " +
              std::to_string(env.subjects.size()) + " subjects (limit 0.95)";
  return o;
}

// ------------------------------------------------------------ criterion 10

Outcome criterion10(const Options& opt) {
  RunConfig cfg = experiment_base(opt);
  cfg = config_with_value(cfg, "experiment.seeds", "[1, 2]");
  const fs::path a = cmd_experiment(cfg, std::nullopt, opt.work / "determinism_a", 1);
  const fs::path b = cmd_experiment(cfg, std::nullopt, opt.work / "determinism_b", 1);
  const std::string ma = read_file(a / "metrics.csv"), mb = read_file(b / "metrics.csv");
  Outcome o;
  o.pass = ma == mb && !ma.empty();
  o.summary = "metrics.csv " + std::string(o.pass ? "byte-identical" : "DIFFERS") + " across two runs (" +
              std::to_string(ma.size()) + " bytes)";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pimtl acceptance run"};
  Options opt;
  std::string work = (fs::temp_directory_path() / "pimtl_acceptance").string();
  std::vector<int> only;
  bool strict = false;
  app.add_option("--work", work, "scratch directory (recreated)");
  app.add_option("--only", only, "criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_flag("--reduced", opt.reduced, "3 subjects with one 2000-sample trial each for criteria 4-7 and 10");
  app.add_flag("--strict", strict, "exit 1 when any criterion fails");
  CLI11_PARSE(app, argc, argv);
  opt.work = work;
  fs::remove_all(opt.work);
  fs::create_directories(opt.work);
  if (std::getenv("PIMTL_LOG") == nullptr) set_log_level(LogLevel::kWarn);

  const std::vector<std::pair<int, Outcome (*)(const Options&)>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},  {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  int failed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn(opt);
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.summary << " ["
              << fmt(secs, 3) << " s]\n";
    for (const auto& d : o.details) std::cout << "    " << d << "\n";
    std::cout.flush();
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << "\n";
  return strict && failed ? 1 : 0;
}
