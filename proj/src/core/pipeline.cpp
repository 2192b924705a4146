// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "checkpoint.hpp"
#include "io_util.hpp"
#include "log.hpp"
#include "preprocess.hpp"

namespace fs = std::filesystem;

namespace pimtl {

namespace {

using ordered_json = nlohmann::ordered_json;

Dataset load_envelope(const RunConfig& config, const fs::path& dir) {
  Dataset d = read_dataset(dir);
  if (d.kind == DatasetKind::kRaw) {
    log_message(LogLevel::kInfo, "preprocessing raw dataset " + dir.string() + " in memory");
    d = preprocess_dataset(d, config.envelope);
  }
  return d;
}

std::size_t heldout_index(const Dataset& d, int id) {
  require(!d.subjects.empty(), ErrorCode::kData, "dataset has no subjects");
  if (id == 0) return d.subjects.size() - 1;
  for (std::size_t i = 0; i < d.subjects.size(); ++i) {
    if (d.subjects[i].params.id == id) return i;
  }
  fail(ErrorCode::kConfig, "held-out subject " + std::to_string(id) + " is not in the dataset");
}

std::vector<SubjectData> prepare_all(const Dataset& d, const RunConfig& config) {
  std::vector<SubjectData> out;
  for (const SubjectRecord& r : d.subjects) {
    out.push_back(prepare_subject(r, config.training.model.window, config.training.split));
    SubjectData& s = out.back();
    const double k = config.experiment.physics_scale;
    s.dyn.inertia *= k;
    s.dyn.damping *= k;
    s.dyn.mass *= k;
    for (double& r : s.arms.r) r *= k;
  }
  return out;
}

ordered_json report_json(const TrainReport& r) {
  ordered_json j;
  j["steps"] = r.steps;
  j["stop_reason"] = r.stop_reason;
  j["best_step"] = r.best_step;
  j["best_val"] = std::isfinite(r.best_val) ? ordered_json(r.best_val) : ordered_json(nullptr);
  j["final_total"] = r.curve.empty() ? ordered_json(nullptr) : ordered_json(r.curve.back().total);
  j["warnings"] = r.warnings;
  return j;
}

std::string ids_text(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? " " : "") + std::to_string(ids[i]);
  return s;
}

void write_run(const fs::path& out, const std::map<std::string, std::string>& files,
               PiCnnModel* model = nullptr, const CheckpointInfo& info = {}) {
  const fs::path staging = make_staging_dir(out);
  try {
    for (const auto& [name, text] : files) atomic_write_text(staging / name, text);
    if (model) save_checkpoint(*model, staging / "model.ckpt", info);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  commit_staging_dir(staging, out);
}

std::string curve_csv(const std::string& method, const std::string& phase, std::uint64_t seed, double fraction,
                      const TrainReport& report, const std::vector<std::string>& muscles) {
  return loss_curves_csv({{method, "", seed, fraction, phase, report}}, muscles);
}

}  // namespace

void cmd_synth(const RunConfig& config, const fs::path& out, Encoding encoding) {
  config.validate();
  log_message(LogLevel::kInfo, "generating " + std::to_string(config.synth.subjects) + " subjects");
  write_dataset(generate_dataset(config.synth, config.seed), out, encoding);
}

void cmd_preprocess(const RunConfig& config, const fs::path& raw_dir, const fs::path& out, Encoding encoding) {
  config.validate();
  const Dataset raw = read_dataset(raw_dir);
  const Dataset env = preprocess_dataset(raw, config.envelope);
  write_dataset(env, out, encoding, {{"preprocess.json", preprocess_record_json(env, config.envelope)}});
}

void cmd_train(const RunConfig& config, const fs::path& data_dir, Method method, const fs::path& out) {
  config.validate();
  require(!method_transfers(method), ErrorCode::kConfig,
          std::string(method_name(method)) + " is a transfer method; use personalize");
  const Dataset data = load_envelope(config, data_dir);
  const std::size_t held = heldout_index(data, config.experiment.heldout);
  const std::vector<SubjectData> subjects = prepare_all(data, config);
  std::vector<const SubjectData*> train;
  std::vector<int> ids;
  if (method_domain(method) == TrainingDomain::kHeldoutOnly) {
    train.push_back(&subjects[held]);
  } else {
    require(subjects.size() >= 2, ErrorCode::kConfig, "generic training needs a subject besides the held-out one");
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      if (i != held) train.push_back(&subjects[i]);
    }
  }
  for (const SubjectData* s : train) ids.push_back(s->id);
  const double lambda = MethodConfig{method, std::nullopt}.effective_lambda(config.training.physics_weight);
  log_message(LogLevel::kInfo, std::string(method_name(method)) + ": training on subjects " + ids_text(ids));
  TrainResult res = train_generic(train, lambda, config.training, config.seed);
  for (const std::string& w : res.report.warnings) log_message(LogLevel::kWarn, w);

  ordered_json rep = report_json(res.report);
  rep["method"] = method_name(method);
  rep["seed"] = config.seed;
  rep["subjects"] = ids;
  rep["heldout"] = subjects[held].id;
  rep["split_hash"] = split_hash(train);
  const CheckpointInfo info{{"method", std::string(method_name(method))},
                            {"seed", std::to_string(config.seed)},
                            {"subjects", ids_text(ids)},
                            {"heldout", std::to_string(subjects[held].id)}};
  write_run(out,
            {{"report.json", rep.dump(2) + "\n"},
             {"loss_curve.csv", curve_csv(std::string(method_name(method)), "generic", config.seed, 1.0,
                                          res.report, data.muscles)},
             {"config.toml", to_toml(config)}},
            res.model.get(), info);
}

void cmd_personalize(const RunConfig& config, const fs::path& data_dir, const fs::path& generic_checkpoint,
                     Method method, double fraction, const fs::path& out) {
  config.validate();
  require(method_transfers(method), ErrorCode::kConfig,
          std::string(method_name(method)) + " is not a transfer method; use train");
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::kConfig, "fraction must be in (0, 1]");
  CheckpointInfo generic_info;
  std::unique_ptr<PiCnnModel> generic = load_checkpoint(generic_checkpoint, &generic_info);
  const Dataset data = load_envelope(config, data_dir);
  const std::size_t held = heldout_index(data, config.experiment.heldout);
  const std::vector<SubjectData> subjects = prepare_all(data, config);
  const double lambda = MethodConfig{method, std::nullopt}.effective_lambda(config.training.physics_weight);
  TrainResult res = personalize(*generic, subjects[held], fraction, lambda, config.training, config.seed);
  for (const std::string& w : res.report.warnings) log_message(LogLevel::kWarn, w);

  ordered_json rep = report_json(res.report);
  rep["method"] = method_name(method);
  rep["seed"] = config.seed;
  rep["fraction"] = fraction;
  rep["heldout"] = subjects[held].id;
  rep["generic_checkpoint"] = generic_checkpoint.string();
  rep["generic_method"] = generic_info.count("method") ? generic_info.at("method") : "";
  rep["split_hash"] = split_hash({&subjects[held]});
  const CheckpointInfo info{{"method", std::string(method_name(method))},
                            {"seed", std::to_string(config.seed)},
                            {"fraction", format_double(fraction)},
                            {"subjects", generic_info.count("subjects") ? generic_info.at("subjects") : ""},
                            {"heldout", std::to_string(subjects[held].id)}};
  write_run(out,
            {{"report.json", rep.dump(2) + "\n"},
             {"loss_curve.csv", curve_csv(std::string(method_name(method)), "personalize", config.seed, fraction,
                                          res.report, data.muscles)},
             {"config.toml", to_toml(config)}},
            res.model.get(), info);
}

void cmd_evaluate(const RunConfig& config, const fs::path& data_dir, const fs::path& checkpoint,
                  const fs::path& out) {
  config.validate();
  CheckpointInfo info;
  std::unique_ptr<PiCnnModel> model = load_checkpoint(checkpoint, &info);
  const Dataset data = load_envelope(config, data_dir);
  const std::size_t held = heldout_index(data, config.experiment.heldout);
  const std::vector<SubjectData> subjects = prepare_all(data, config);
  require(subjects[held].trials.front().channels == model->config().input_channels &&
              subjects[held].trials.front().width == model->config().window,
          ErrorCode::kCompatibility, "checkpoint " + checkpoint.string() + " does not match the dataset windows");
  EvaluationRecord rec = evaluate_predictions(predict_test(*model, subjects[held]), data.muscles);
  auto get = [&](const char* k, const std::string& d) { return info.count(k) ? info.at(k) : d; };
  rec.method = get("method", "unknown");
  rec.scenario = std::string(scenario_name(config.experiment.scenario));
  rec.seed = std::stoull(get("seed", "0"));
  rec.fraction = std::stod(get("fraction", "1"));
  std::istringstream ids(get("subjects", ""));
  for (int id; ids >> id;) {
    if (id != subjects[held].id) rec.generic_subjects.push_back(id);
  }
  rec.heldout = subjects[held].id;
  rec.split_hash = split_hash({&subjects[held]});
  const fs::path staging = make_staging_dir(out);
  try {
    emit_reports({rec}, {}, data.muscles, staging);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  commit_staging_dir(staging, out);
}

fs::path cmd_experiment(const RunConfig& config, const std::optional<fs::path>& data_dir, const fs::path& out_root,
                        int jobs) {
  config.validate();
  std::string data_id = "synth";
  Dataset data;
  if (data_dir) {
    data_id = fnv1a_hex(read_text_file(*data_dir / "manifest.json"));
    data = load_envelope(config, *data_dir);
  } else {
    log_message(LogLevel::kInfo, "generating and preprocessing the dataset in memory");
    data = preprocess_dataset(generate_dataset(config.synth, config.seed), config.envelope);
  }
  const std::string config_text = to_toml(config);
  const fs::path run_dir = out_root / ("run-" + fnv1a_hex(config_text + "\ndata " + data_id));

  const ExperimentResult result =
      run_experiment(data, config.experiment, config.training, jobs,
                     [](const std::string& msg) { log_message(LogLevel::kInfo, msg); });

  ordered_json summary;
  summary["config_hash"] = config_hash(config);
  summary["data"] = data_id;
  summary["runs"] = ordered_json::array();
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const EvaluationRecord& r = result.records[i];
    const TrainReport& rep = result.curves[i].report;
    ordered_json j;
    j["method"] = r.method;
    j["scenario"] = r.scenario;
    j["seed"] = r.seed;
    j["fraction"] = r.fraction;
    j["generic_subjects"] = r.generic_subjects;
    j["heldout"] = r.heldout;
    j["split_hash"] = r.split_hash;
    j["training"] = report_json(rep);
    ordered_json m = ordered_json::object();
    for (const OutputMetrics& o : r.outputs) m[o.name] = {{"rmse", o.rmse}, {"cc", o.cc}, {"nrmse", o.nrmse}};
    j["metrics"] = m;
    summary["runs"].push_back(j);
    for (const std::string& w : rep.warnings) log_message(LogLevel::kWarn, r.method + ": " + w);
  }

  const fs::path staging = make_staging_dir(run_dir);
  try {
    atomic_write_text(staging / "config.toml", config_text);
    atomic_write_text(staging / "summary.json", summary.dump(2) + "\n");
    atomic_write_text(staging / "timing.csv", timing_csv(timing_report(result.records)));
    emit_reports(result.records, result.curves, data.muscles, staging);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  commit_staging_dir(staging, run_dir);
  return run_dir;
}

}  // namespace pimtl
