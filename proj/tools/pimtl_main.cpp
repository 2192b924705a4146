// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// pimtl command-line tool. Uses only the C interface of libpimtl.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pimtl/pimtl.h"

namespace {

constexpr int kUsageExit = 2;
// Library failures exit with 10 + status (see README).
constexpr int kStatusExitBase = 10;

int report(pimtl_status status) {
  nlohmann::ordered_json j;
  j["error"] = {{"status", pimtl_status_name(status)},
                {"code", static_cast<int>(status)},
                {"message", pimtl_last_error()}};
  std::cerr << j.dump() << "\n";
  return kStatusExitBase + static_cast<int>(status);
}

int usage_error(const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = {{"status", "usage"}, {"code", kUsageExit}, {"message", message}};
  std::cerr << j.dump() << "\n";
  return kUsageExit;
}

struct UsageError {
  std::string message;
};

struct Failure {
  pimtl_status status;
};

void check(pimtl_status status) {
  if (status != PIMTL_OK) throw Failure{status};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  pimtl_string_free(s);
  return out;
}

std::string toml_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string toml_string(const std::string& s) { return "\"" + s + "\""; }

template <typename T, typename F>
std::string toml_array(const std::vector<T>& values, F&& literal) {
  std::string s = "[";
  for (std::size_t i = 0; i < values.size(); ++i) s += (i ? ", " : "") + literal(values[i]);
  return s + "]";
}

class Config {
 public:
  Config() = default;
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;
  ~Config() { pimtl_config_free(handle_); }

  void load(const std::optional<std::string>& path) {
    if (path) {
      check(pimtl_config_load(path->c_str(), &handle_));
    } else {
      check(pimtl_config_new(&handle_));
    }
  }
  void set(const std::string& key, const std::string& literal) {
    check(pimtl_config_set(handle_, key.c_str(), literal.c_str()));
  }
  const pimtl_config* get() const { return handle_; }

 private:
  pimtl_config* handle_ = nullptr;
};

void check_method(const std::string& name) {
  if (pimtl_method_check(name.c_str()) != PIMTL_OK) {
    throw UsageError{"unknown method '" + name + "' (CNN-1, CNN-2, CNN-KT, Pi-CNN-1, Pi-CNN-2, Pi-CNN-KT)"};
  }
}

pimtl_format parse_format(const std::string& f) { return f == "csv" ? PIMTL_FORMAT_CSV : PIMTL_FORMAT_BINARY; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pimtl: physics-informed CNN training and subject personalisation for sEMG"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", pimtl_version());

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
  std::string format = "binary";
  std::optional<std::string> log_level;
  app.add_option("--config", config_path, "TOML configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed (overrides the config's seed)");
  app.add_option("--out", out, "output directory (experiment: root of the run directories)");
  app.add_option("--jobs", jobs, "parallel training jobs for experiment")->check(CLI::PositiveNumber);
  app.add_option("--format", format, "dataset encoding")->check(CLI::IsMember({"binary", "csv"}));
  app.add_option("--log", log_level, "log level (overrides PIMTL_LOG)")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));

  CLI::App* synth = app.add_subcommand("synth", "generate a raw synthetic dataset");
  std::optional<int> subjects;
  std::optional<double> duration;
  std::optional<int> trials;
  synth->add_option("--subjects", subjects, "number of subjects")->check(CLI::PositiveNumber);
  synth->add_option("--duration", duration, "trial duration in seconds")->check(CLI::PositiveNumber);
  synth->add_option("--trials", trials, "trials per subject")->check(CLI::PositiveNumber);

  CLI::App* preprocess = app.add_subcommand("preprocess", "raw dataset to MVC-normalised envelopes");
  std::string input;
  preprocess->add_option("--input", input, "raw dataset directory")->required();

  std::string data;
  std::string method;
  std::optional<int> heldout;
  CLI::App* train = app.add_subcommand("train", "train CNN-1, Pi-CNN-1, CNN-2 or Pi-CNN-2");
  train->add_option("--data", data, "dataset directory")->required();
  train->add_option("--method", method, "method name")->required();
  train->add_option("--heldout", heldout, "held-out subject id");

  CLI::App* personalize = app.add_subcommand("personalize", "fine-tune a generic checkpoint (CNN-KT, Pi-CNN-KT)");
  std::string generic;
  double fraction = 1.0;
  personalize->add_option("--data", data, "dataset directory")->required();
  personalize->add_option("--generic", generic, "generic checkpoint")->required()->check(CLI::ExistingFile);
  personalize->add_option("--method", method, "method name")->required();
  personalize->add_option("--fraction", fraction, "fraction of the training split")->check(CLI::Range(0.0, 1.0));
  personalize->add_option("--heldout", heldout, "held-out subject id");

  CLI::App* evaluate = app.add_subcommand("evaluate", "test-split metrics of a checkpoint");
  std::string model;
  evaluate->add_option("--data", data, "dataset directory")->required();
  evaluate->add_option("--model", model, "checkpoint")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--heldout", heldout, "held-out subject id");

  CLI::App* experiment = app.add_subcommand("experiment", "run the method x seed x fraction matrix");
  std::optional<std::string> exp_data;
  std::optional<std::string> scenario;
  std::optional<std::string> methods;
  std::vector<double> fractions;
  std::vector<std::uint64_t> seeds;
  experiment->add_option("--data", exp_data, "dataset directory (default: generate from the config)");
  experiment->add_option("--scenario", scenario, "single or multiple")
      ->check(CLI::IsMember({"single", "multiple"}));
  experiment->add_option("--heldout", heldout, "held-out subject id");
  experiment->add_option("--methods", methods, "comma-separated method names");
  experiment->add_option("--fractions", fractions, "comma-separated personalisation fractions")
      ->delimiter(',')
      ->check(CLI::Range(0.0, 1.0));
  experiment->add_option("--seeds", seeds, "comma-separated training seeds")->delimiter(',');

  CLI::App* config_cmd = app.add_subcommand("config", "print the resolved configuration");
  bool reference = false;
  config_cmd->add_flag("--reference", reference, "print every key with its default instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return usage_error(e.what());
  }

  try {
    if (log_level) check(pimtl_set_log_level(log_level->c_str()));
    Config config;
    config.load(config_path);
    if (seed) config.set("seed", std::to_string(*seed));
    if (heldout) config.set("experiment.heldout", std::to_string(*heldout));
    const pimtl_format fmt = parse_format(format);
    auto need_out = [&] {
      if (out.empty()) throw UsageError{"--out is required for this command"};
    };

    if (synth->parsed()) {
      need_out();
      if (subjects) config.set("synth.subjects", std::to_string(*subjects));
      if (duration) config.set("synth.trial_duration", toml_double(*duration));
      if (trials) config.set("synth.trials_per_subject", std::to_string(*trials));
      check(pimtl_synth(config.get(), out.c_str(), fmt));
    } else if (preprocess->parsed()) {
      need_out();
      check(pimtl_preprocess(config.get(), input.c_str(), out.c_str(), fmt));
    } else if (train->parsed()) {
      need_out();
      check_method(method);
      check(pimtl_train(config.get(), data.c_str(), method.c_str(), out.c_str()));
    } else if (personalize->parsed()) {
      need_out();
      check_method(method);
      if (fraction <= 0.0) throw UsageError{"--fraction must be in (0, 1]"};
      check(pimtl_personalize(config.get(), data.c_str(), generic.c_str(), method.c_str(), fraction, out.c_str()));
    } else if (evaluate->parsed()) {
      need_out();
      check(pimtl_evaluate(config.get(), data.c_str(), model.c_str(), out.c_str()));
    } else if (experiment->parsed()) {
      if (scenario) config.set("experiment.scenario", toml_string(*scenario));
      if (methods) {
        std::vector<std::string> names;
        std::stringstream ss(*methods);
        for (std::string name; std::getline(ss, name, ',');) {
          check_method(name);
          names.push_back(name);
        }
        if (names.empty()) throw UsageError{"--methods is empty"};
        config.set("experiment.methods", toml_array(names, toml_string));
      }
      if (!fractions.empty()) {
        for (double f : fractions) {
          if (f <= 0.0) throw UsageError{"--fractions entries must be in (0, 1]"};
        }
        config.set("experiment.fractions", toml_array(fractions, toml_double));
      }
      if (!seeds.empty()) {
        config.set("experiment.seeds", toml_array(seeds, [](std::uint64_t s) { return std::to_string(s); }));
      }
      char* run_dir = nullptr;
      check(pimtl_experiment(config.get(), exp_data ? exp_data->c_str() : nullptr,
                             out.empty() ? "runs" : out.c_str(), jobs, &run_dir));
      std::cout << take(run_dir) << "\n";
    } else if (config_cmd->parsed()) {
      char* text = nullptr;
      check(reference ? pimtl_config_reference(&text) : pimtl_config_to_toml(config.get(), &text));
      std::cout << take(text);
    }
  } catch (const UsageError& e) {
    return usage_error(e.message);
  } catch (const Failure& f) {
    return report(f.status);
  }
  return 0;
}
