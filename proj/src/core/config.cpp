// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "config.hpp"

#include <map>
#include <set>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "io_util.hpp"

namespace pimtl {

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seeds are read through the size_t overloads");

// Visits every configurable field. The visitor sees (section, key, value,
// description); section "" is the top level.
template <typename V>
void visit_fields(RunConfig& c, V& v) {
  v("", "schema_version", c.schema_version, "configuration schema version");
  v("", "seed", c.seed, "master seed for data generation");

  WristDynamicsParams& d = c.synth.population.dynamics;
  v("dynamics", "inertia", d.inertia, "segment inertia I (kg m^2)");
  v("dynamics", "damping", d.damping, "viscous damping b (N m s/rad)");
  v("dynamics", "mass", d.mass, "segment mass m (kg)");
  v("dynamics", "com_length", d.com_length, "centre-of-mass distance l (m)");
  v("dynamics", "gravity", d.gravity, "gravitational acceleration g (m/s^2)");
  v("dynamics", "moment_arms", c.synth.population.arms.r, "signed moment arms per muscle (m)");

  SynthConfig& s = c.synth;
  v("synth", "subjects", s.subjects, "number of subjects");
  v("synth", "trials_per_subject", s.trials_per_subject, "trials per subject");
  v("synth", "trial_duration", s.trial_duration, "trial length (s)");
  v("synth", "fs", s.fs, "kinematic and envelope sampling rate (Hz)");
  v("synth", "fs_emg", s.fs_emg, "raw EMG sampling rate (Hz)");
  v("synth", "calibration_duration", s.calibration_duration, "MVC calibration recording length (s)");
  v("synth", "max_resample_attempts", s.max_resample_attempts, "redraws for a subject whose trial is unstable");
  PopulationConfig& p = s.population;
  v("synth", "fmax_nominal", p.fmax_nominal, "nominal maximum force per muscle (N)");
  v("synth", "fmax_multiplier", p.fmax_multiplier, "per-subject multiplier range for fmax");
  v("synth", "tau_act", p.tau_act, "activation time constant range (s)");
  v("synth", "tau_deact", p.tau_deact, "deactivation time constant range (s)");
  v("synth", "emg_gain", p.emg_gain, "EMG gain range");
  v("synth", "emg_noise_sd", p.emg_noise_sd, "additive EMG noise sd range");
  v("synth", "dynamics_multiplier", p.dynamics_multiplier, "per-subject multiplier range for I, b, m");
  v("synth", "arm_multiplier", p.arm_multiplier, "per-subject multiplier range for the moment arms");
  v("synth", "base_freq", s.excitation.base_freq, "excitation frequency range (Hz)");
  v("synth", "amplitude", s.excitation.amplitude, "excitation amplitude range");
  v("synth", "phase_jitter_sd", s.excitation.phase_jitter_sd, "sd of the per-trial phase (rad)");

  EnvelopeSettings& e = c.envelope;
  v("sigproc", "bandpass_order", e.bandpass_order, "Butterworth order of each band-pass stage");
  v("sigproc", "highpass_hz", e.highpass_hz, "band-pass lower corner (Hz)");
  v("sigproc", "lowpass_hz", e.lowpass_hz, "band-pass upper corner (Hz)");
  v("sigproc", "envelope_order", e.envelope_order, "envelope low-pass order");
  v("sigproc", "envelope_hz", e.envelope_hz, "envelope low-pass corner (Hz)");
  v("sigproc", "clamp_max", e.clamp_max, "upper clamp of the normalised envelope");
  v("sigproc", "window", c.training.model.window, "window length W (samples)");
  v("sigproc", "stride", c.window_stride, "window stride (samples)");

  ModelConfig& m = c.training.model;
  v("model", "conv_channels", m.conv_channels, "kernels per convolutional layer");
  v("model", "kernel", m.kernel, "convolution kernel size");
  v("model", "padding", m.padding, "convolution zero padding");
  v("model", "hidden", m.hidden, "hidden nodes per dense layer");
  v("model", "dropout", m.dropout, "dropout rate");
  v("model", "channel_dropout", m.channel_dropout, "drop whole feature maps in the conv blocks");
  v("model", "bn_eps", m.bn_eps, "batch-norm epsilon");
  v("model", "bn_calibration", m.bn_calibration, "training windows per batch-norm statistics pass");

  TrainConfig& t = c.training;
  v("training", "max_iter", t.max_iter, "maximum iterations");
  v("training", "iteration_unit", t.unit, "\"steps\" or \"epochs\"");
  v("training", "lr", t.lr, "learning rate");
  v("training", "momentum", t.momentum, "SGD momentum");
  v("training", "grad_clip", t.grad_clip, "global gradient-norm cap, 0 disables");
  v("training", "bn_recalibrate", t.bn_recalibrate, "steps between batch-norm statistics passes");
  v("training", "segment", t.segment, "contiguous windows per step (>= 5)");
  v("training", "physics_weight", t.physics_weight, "physics loss weight for Pi-* methods");
  v("training", "early_stopping", t.early_stopping, "stop on a validation plateau");
  v("training", "patience", t.patience, "steps without improvement before stopping");
  v("training", "min_delta", t.min_delta, "minimum validation improvement");
  v("training", "val_every", t.val_every, "steps between validation evaluations");
  v("training", "val_segments", t.val_segments, "validation segments per evaluation");
  v("training", "standardize_targets", t.standardize_targets, "train on standardised outputs");
  v("training", "split_train", t.split.train, "training fraction of every trial");
  v("training", "split_val", t.split.val, "validation fraction of every trial");
  v("training", "split_test", t.split.test, "test fraction of every trial");

  ExperimentConfig& x = c.experiment;
  v("experiment", "methods", x.methods, "methods to run");
  v("experiment", "scenario", x.scenario, "\"single\" or \"multiple\"");
  v("experiment", "seeds", x.seeds, "training seeds");
  v("experiment", "fractions", x.fractions, "personalisation fractions");
  v("experiment", "heldout", x.heldout, "held-out subject id, 0 for the last subject");
  v("experiment", "physics_scale", x.physics_scale, "scale of I, b, m and arms in the physics loss");
}

std::string full_key(std::string_view section, std::string_view key) {
  return section.empty() ? std::string(key) : std::string(section) + "." + std::string(key);
}

// ------------------------------------------------------------ TOML writing

std::string quote(std::string_view s) { return "\"" + std::string(s) + "\""; }

std::string literal(double v) {
  std::string s = format_double(v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";  // keep floats as floats
  return s;
}
std::string literal(int v) { return std::to_string(v); }
std::string literal(std::size_t v) { return std::to_string(v); }
std::string literal(bool v) { return v ? "true" : "false"; }
std::string literal(const Interval& v) { return "[" + literal(v.lo) + ", " + literal(v.hi) + "]"; }
std::string literal(IterationUnit u) { return quote(u == IterationUnit::kSteps ? "steps" : "epochs"); }
std::string literal(Scenario s) { return quote(scenario_name(s)); }
template <typename T>
std::string literal(const std::vector<T>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + literal(v[i]);
  return s + "]";
}
template <>
std::string literal(const std::vector<Method>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + quote(method_name(v[i]));
  return s + "]";
}

struct Writer {
  std::string out;
  std::string section = "<none>";
  template <typename T>
  void operator()(std::string_view sec, std::string_view key, T& value, std::string_view) {
    if (sec != section) {
      if (!sec.empty()) out += "\n[" + std::string(sec) + "]\n";
      section = std::string(sec);
    }
    out += std::string(key) + " = " + literal(value) + "\n";
  }
};

struct Lister {
  std::vector<ConfigKey> keys;
  template <typename T>
  void operator()(std::string_view sec, std::string_view key, T& value, std::string_view doc) {
    keys.push_back({full_key(sec, key), literal(value), std::string(doc)});
  }
};

// ------------------------------------------------------------ TOML reading

struct Reader {
  const toml::table& root;
  std::string source;
  std::set<std::string> seen;

  [[noreturn]] void bad(const toml::node& node, const std::string& key, const std::string& what) const {
    const auto& src = node.source();
    fail(ErrorCode::kConfig, source + ":" + std::to_string(src.begin.line) + ":" + std::to_string(src.begin.column) +
                                 ": " + key + " " + what);
  }

  double as_double(const toml::node& n, const std::string& key) const {
    if (auto v = n.value<double>(); v && (n.is_floating_point() || n.is_integer())) return *v;
    bad(n, key, "must be a number");
  }
  std::int64_t as_int(const toml::node& n, const std::string& key) const {
    if (n.is_integer()) return *n.value<std::int64_t>();
    bad(n, key, "must be an integer");
  }
  std::string as_string(const toml::node& n, const std::string& key) const {
    if (n.is_string()) return *n.value<std::string>();
    bad(n, key, "must be a string");
  }
  const toml::array& as_array(const toml::node& n, const std::string& key) const {
    if (const toml::array* a = n.as_array()) return *a;
    bad(n, key, "must be an array");
  }

  void read(const toml::node& n, const std::string& key, double& out) { out = as_double(n, key); }
  void read(const toml::node& n, const std::string& key, int& out) {
    const std::int64_t v = as_int(n, key);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) bad(n, key, "is out of range");
    out = static_cast<int>(v);
  }
  void read(const toml::node& n, const std::string& key, std::size_t& out) {
    const std::int64_t v = as_int(n, key);
    if (v < 0) bad(n, key, "must be non-negative");
    out = static_cast<std::size_t>(v);
  }
  void read(const toml::node& n, const std::string& key, bool& out) {
    if (!n.is_boolean()) bad(n, key, "must be true or false");
    out = *n.value<bool>();
  }
  void read(const toml::node& n, const std::string& key, Interval& out) {
    const toml::array& a = as_array(n, key);
    if (a.size() != 2) bad(n, key, "must be a [lo, hi] pair");
    out = {as_double(*a.get(0), key), as_double(*a.get(1), key)};
  }
  void read(const toml::node& n, const std::string& key, IterationUnit& out) {
    const std::string s = as_string(n, key);
    if (s == "steps") out = IterationUnit::kSteps;
    else if (s == "epochs") out = IterationUnit::kEpochs;
    else bad(n, key, "must be \"steps\" or \"epochs\"");
  }
  void read(const toml::node& n, const std::string& key, Scenario& out) {
    try {
      out = parse_scenario(as_string(n, key));
    } catch (const Error& e) {
      bad(n, key, "must be \"single\" or \"multiple\"");
    }
  }
  template <typename T>
  void read(const toml::node& n, const std::string& key, std::vector<T>& out) {
    const toml::array& a = as_array(n, key);
    std::vector<T> v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) read(*a.get(i), key, v[i]);
    out = std::move(v);
  }
  void read(const toml::node& n, const std::string& key, Method& out) {
    const std::string s = as_string(n, key);
    try {
      out = parse_method(s);
    } catch (const Error&) {
      bad(n, key, "has unknown method '" + s + "'");
    }
  }

  template <typename T>
  void operator()(std::string_view sec, std::string_view key, T& value, std::string_view) {
    const toml::node* node = nullptr;
    if (sec.empty()) {
      node = root.get(key);
    } else if (const toml::node* t = root.get(sec)) {
      if (const toml::table* tab = t->as_table()) node = tab->get(key);
    }
    seen.insert(full_key(sec, key));
    if (node) read(*node, full_key(sec, key), value);
  }

  void reject_unknown() const {
    std::set<std::string> sections;
    for (const std::string& k : seen) {
      if (const auto dot = k.find('.'); dot != std::string::npos) sections.insert(k.substr(0, dot));
    }
    for (const auto& [k, node] : root) {
      const std::string name(k.str());
      if (node.is_table()) {
        if (!sections.count(name)) bad(node, "[" + name + "]", "is not a known section");
        for (const auto& [k2, node2] : *node.as_table()) {
          const std::string key = name + "." + std::string(k2.str());
          if (!seen.count(key)) bad(node2, key, "is not a known key");
        }
      } else if (!seen.count(name)) {
        bad(node, name, "is not a known key");
      }
    }
  }
};

}  // namespace

void RunConfig::validate() const {
  require(schema_version == kConfigSchemaVersion, ErrorCode::kVersion,
          "config schema_version " + std::to_string(schema_version) + " is not supported (expected " +
              std::to_string(kConfigSchemaVersion) + ")");
  synth.validate();
  synth.population.arms.validate(synth.population.fmax_nominal.size());
  require(envelope.bandpass_order == 2 || envelope.bandpass_order == 4, ErrorCode::kConfig,
          "sigproc.bandpass_order must be 2 or 4");
  require(envelope.envelope_order == 2 || envelope.envelope_order == 4, ErrorCode::kConfig,
          "sigproc.envelope_order must be 2 or 4");
  require(envelope.highpass_hz > 0.0 && envelope.highpass_hz < envelope.lowpass_hz &&
              envelope.lowpass_hz < synth.fs_emg / 2.0,
          ErrorCode::kConfig, "sigproc band-pass corners must satisfy 0 < highpass < lowpass < fs_emg/2");
  require(envelope.envelope_hz > 0.0 && envelope.envelope_hz < synth.fs / 2.0, ErrorCode::kConfig,
          "sigproc.envelope_hz must be below fs/2");
  require(envelope.clamp_max > 0.0, ErrorCode::kConfig, "sigproc.clamp_max must be positive");
  require(window_stride >= 1, ErrorCode::kConfig, "sigproc.stride must be >= 1");
  require(window_stride == 1, ErrorCode::kConfig,
          "sigproc.stride must be 1 for training (physics segments need contiguous windows)");
  training.validate();
  experiment.validate();
}

RunConfig parse_config(std::string_view toml_text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    const auto& b = e.source().begin;
    fail(ErrorCode::kParse, std::string(source) + ":" + std::to_string(b.line) + ":" + std::to_string(b.column) +
                                ": " + std::string(e.description()));
  }
  RunConfig c;
  Reader r{root, std::string(source), {}};
  visit_fields(c, r);
  r.reject_unknown();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path), path.string());
}

std::string to_toml(const RunConfig& config) {
  RunConfig copy = config;
  Writer w;
  visit_fields(copy, w);
  return w.out;
}

std::string config_hash(const RunConfig& config) { return fnv1a_hex(to_toml(config)); }

RunConfig config_with_value(const RunConfig& config, std::string_view key, std::string_view toml_literal) {
  require(toml_literal.find('\n') == std::string_view::npos, ErrorCode::kConfig,
          "value for " + std::string(key) + " must be a single-line TOML literal");
  const auto dot = key.find('.');
  const std::string section = dot == std::string_view::npos ? "" : std::string(key.substr(0, dot));
  const std::string name(dot == std::string_view::npos ? key : key.substr(dot + 1));
  const std::string text = to_toml(config);
  std::istringstream in(text);
  std::string out, line, current;
  bool found = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.front() == '[') current = line.substr(1, line.size() - 2);
    if (!found && current == section && line.rfind(name + " = ", 0) == 0) {
      line = name + " = " + std::string(toml_literal);
      found = true;
    }
    out += line + "\n";
  }
  require(found, ErrorCode::kConfig, "unknown configuration key '" + std::string(key) + "'");
  return parse_config(out, "override " + std::string(key));
}

std::string config_value(const RunConfig& config, std::string_view key) {
  RunConfig copy = config;
  Lister l;
  visit_fields(copy, l);
  for (const ConfigKey& k : l.keys) {
    if (k.key == key) return k.default_value;
  }
  fail(ErrorCode::kConfig, "unknown configuration key '" + std::string(key) + "'");
}

std::vector<ConfigKey> config_reference() {
  RunConfig c;
  Lister l;
  visit_fields(c, l);
  return l.keys;
}

}  // namespace pimtl
