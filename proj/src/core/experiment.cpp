// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "io_util.hpp"

namespace pimtl {

void ExperimentConfig::validate() const {
  require(!methods.empty(), ErrorCode::kConfig, "experiment.methods is empty");
  require(!seeds.empty(), ErrorCode::kConfig, "experiment.seeds is empty");
  require(!fractions.empty(), ErrorCode::kConfig, "experiment.fractions is empty");
  for (double f : fractions) {
    require(f > 0.0 && f <= 1.0, ErrorCode::kConfig, "experiment.fractions entries must be in (0, 1]");
  }
  require(heldout >= 0, ErrorCode::kConfig, "experiment.heldout must be a subject id or 0");
  require(physics_scale > 0.0, ErrorCode::kConfig, "experiment.physics_scale must be positive");
}

namespace {

// Runs tasks on up to `jobs` threads; the first exception is rethrown.
void run_parallel(std::vector<std::function<void()>>& tasks, int jobs) {
  const std::size_t workers = std::min<std::size_t>(tasks.size(), static_cast<std::size_t>(std::max(jobs, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
      try {
        tasks[i]();
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        next = tasks.size();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

struct GenericJob {
  std::uint64_t seed = 0;
  std::vector<std::size_t> subjects;  // indices into the prepared subjects
  double lambda = 0.0;
  Method method = Method::kCnn1;
  TrainResult result;
};

struct HeldoutJob {
  std::uint64_t seed = 0;
  Method method = Method::kCnn2;
  double fraction = 1.0;
  std::size_t generic = 0;  // index into generic jobs, KT only
  TrainResult result;
};

}  // namespace

ExperimentResult run_experiment(const Dataset& envelope, const ExperimentConfig& experiment,
                                const TrainConfig& training, int jobs, const ProgressFn& progress) {
  experiment.validate();
  training.validate();
  require(envelope.kind == DatasetKind::kEnvelope, ErrorCode::kData,
          "experiments need a preprocessed (envelope) dataset");
  require(envelope.subjects.size() >= 2, ErrorCode::kConfig,
          "experiments need at least 2 subjects (generic and held-out)");

  std::vector<SubjectData> subjects;
  for (const SubjectRecord& r : envelope.subjects) {
    subjects.push_back(prepare_subject(r, training.model.window, training.split));
    SubjectData& s = subjects.back();
    s.dyn.inertia *= experiment.physics_scale;
    s.dyn.damping *= experiment.physics_scale;
    s.dyn.mass *= experiment.physics_scale;
    for (double& r : s.arms.r) r *= experiment.physics_scale;
  }
  std::size_t held = subjects.size() - 1;
  if (experiment.heldout != 0) {
    const auto it = std::find_if(subjects.begin(), subjects.end(),
                                 [&](const SubjectData& s) { return s.id == experiment.heldout; });
    require(it != subjects.end(), ErrorCode::kConfig,
            "held-out subject " + std::to_string(experiment.heldout) + " is not in the dataset");
    held = static_cast<std::size_t>(it - subjects.begin());
  }
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    if (i != held) others.push_back(i);
  }
  std::vector<std::vector<std::size_t>> generic_sets;
  if (experiment.scenario == Scenario::kMultiple) {
    generic_sets.push_back(others);
  } else {
    for (std::size_t i : others) generic_sets.push_back({i});
  }
  const SubjectData& held_data = subjects[held];
  const std::string hash = split_hash({&held_data});

  auto wants = [&](Method m) {
    return std::find(experiment.methods.begin(), experiment.methods.end(), m) != experiment.methods.end();
  };

  // Phase 1: networks trained from scratch.
  std::vector<GenericJob> generic_jobs;
  std::map<std::tuple<std::uint64_t, std::size_t, Method>, std::size_t> generic_index;
  for (std::uint64_t seed : experiment.seeds) {
    for (std::size_t g = 0; g < generic_sets.size(); ++g) {
      for (Method base : {Method::kCnn1, Method::kPiCnn1}) {
        const Method kt = base == Method::kCnn1 ? Method::kCnnKt : Method::kPiCnnKt;
        if (!wants(base) && !wants(kt)) continue;
        GenericJob job;
        job.seed = seed;
        job.subjects = generic_sets[g];
        job.method = base;
        job.lambda = MethodConfig{base, std::nullopt}.effective_lambda(training.physics_weight);
        generic_index[{seed, g, base}] = generic_jobs.size();
        generic_jobs.push_back(std::move(job));
      }
    }
  }
  std::vector<HeldoutJob> scratch_jobs;
  for (std::uint64_t seed : experiment.seeds) {
    for (Method m : {Method::kCnn2, Method::kPiCnn2}) {
      if (!wants(m)) continue;
      for (double f : experiment.fractions) {
        HeldoutJob job;
        job.seed = seed;
        job.method = m;
        job.fraction = f;
        scratch_jobs.push_back(std::move(job));
      }
    }
  }

  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  std::mutex say_mu;
  auto say_locked = [&](const std::string& msg) {
    std::lock_guard lock(say_mu);
    say(msg);
  };

  std::vector<std::function<void()>> tasks;
  for (GenericJob& job : generic_jobs) {
    tasks.push_back([&] {
      std::vector<const SubjectData*> data;
      for (std::size_t i : job.subjects) data.push_back(&subjects[i]);
      job.result = train_generic(data, job.lambda, training, job.seed);
      say_locked(std::string(method_name(job.method)) + " generic seed " + std::to_string(job.seed) + ": " +
                 std::to_string(job.result.report.steps) + " steps");
    });
  }
  for (HeldoutJob& job : scratch_jobs) {
    tasks.push_back([&] {
      const double lambda = MethodConfig{job.method, std::nullopt}.effective_lambda(training.physics_weight);
      job.result = train_generic({&held_data}, lambda, training, job.seed, job.fraction);
      say_locked(std::string(method_name(job.method)) + " seed " + std::to_string(job.seed) + " fraction " +
                 format_double(job.fraction) + ": " + std::to_string(job.result.report.steps) + " steps");
    });
  }
  run_parallel(tasks, jobs);

  // Phase 2: personalisation of the generic networks.
  std::vector<HeldoutJob> kt_jobs;
  for (std::uint64_t seed : experiment.seeds) {
    for (std::size_t g = 0; g < generic_sets.size(); ++g) {
      for (Method m : {Method::kCnnKt, Method::kPiCnnKt}) {
        if (!wants(m)) continue;
        for (double f : experiment.fractions) {
          HeldoutJob job;
          job.seed = seed;
          job.method = m;
          job.fraction = f;
          job.generic = generic_index.at({seed, g, generic_method_for(m)});
          kt_jobs.push_back(std::move(job));
        }
      }
    }
  }
  tasks.clear();
  for (HeldoutJob& job : kt_jobs) {
    tasks.push_back([&] {
      const double lambda = MethodConfig{job.method, std::nullopt}.effective_lambda(training.physics_weight);
      // personalize() clones the generic network, so sharing it across threads is read-only
      job.result = personalize(*generic_jobs[job.generic].result.model, held_data, job.fraction, lambda,
                               training, job.seed);
      say_locked(std::string(method_name(job.method)) + " seed " + std::to_string(job.seed) + " fraction " +
                 format_double(job.fraction) + ": " + std::to_string(job.result.report.steps) + " steps");
    });
  }
  run_parallel(tasks, jobs);

  // Assemble records in a fixed order.
  std::vector<std::string> muscles = envelope.muscles;
  ExperimentResult out;
  const std::string scenario(scenario_name(experiment.scenario));
  auto ids_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<int> ids;
    for (std::size_t i : idx) ids.push_back(subjects[i].id);
    return ids;
  };
  auto add = [&](Method m, std::uint64_t seed, double fraction, const std::vector<int>& gen, TrainResult& res,
                 const std::string& phase) {
    EvaluationRecord rec = evaluate_predictions(predict_test(*res.model, held_data), muscles);
    rec.method = std::string(method_name(m));
    rec.scenario = scenario;
    rec.seed = seed;
    rec.fraction = fraction;
    rec.generic_subjects = gen;
    rec.heldout = held_data.id;
    rec.split_hash = hash;
    rec.wall_seconds = res.report.wall_seconds;
    rec.timing_phase = method_transfers(m) ? "personalize" : "full";
    out.records.push_back(std::move(rec));
    out.curves.push_back({std::string(method_name(m)), scenario, seed, fraction, phase, res.report});
  };
  for (std::uint64_t seed : experiment.seeds) {
    // from-scratch held-out methods do not depend on the generic set
    for (Method m : experiment.methods) {
      if (method_domain(m) != TrainingDomain::kHeldoutOnly) continue;
      for (HeldoutJob& job : scratch_jobs) {
        if (job.seed == seed && job.method == m) add(m, seed, job.fraction, {}, job.result, "generic");
      }
    }
    for (std::size_t g = 0; g < generic_sets.size(); ++g) {
      const std::vector<int> gen = ids_of(generic_sets[g]);
      for (Method m : experiment.methods) {
        if (method_domain(m) == TrainingDomain::kOtherSubjects) {
          GenericJob& job = generic_jobs.at(generic_index.at({seed, g, m}));
          add(m, seed, 1.0, gen, job.result, "generic");
        } else if (method_domain(m) == TrainingDomain::kOtherThenHeldout) {
          for (HeldoutJob& job : kt_jobs) {
            if (job.seed == seed && job.method == m &&
                job.generic == generic_index.at({seed, g, generic_method_for(m)})) {
              add(m, seed, job.fraction, gen, job.result, "personalize");
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace pimtl
