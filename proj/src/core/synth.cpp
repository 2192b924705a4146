// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "errors.hpp"
#include "sigproc.hpp"

namespace pimtl {

namespace {

double draw(std::mt19937_64& rng, const Interval& iv) {
  const double u = std::generate_canonical<double, 53>(rng);
  return iv.lo + (iv.hi - iv.lo) * u;
}

void check_interval(const Interval& iv, const char* name, bool positive) {
  require(std::isfinite(iv.lo) && std::isfinite(iv.hi) && iv.lo <= iv.hi, ErrorCode::kConfig,
          std::string("invalid interval for ") + name);
  if (positive) {
    require(iv.lo > 0.0, ErrorCode::kConfig, std::string(name) + " bounds must be > 0");
  }
}

std::string describe(const SubjectParams& s, const ExcitationProfile& p) {
  std::ostringstream os;
  os << "subject " << s.id << " (fmax=[";
  for (std::size_t n = 0; n < s.fmax.size(); ++n) os << (n ? "," : "") << s.fmax[n];
  os << "], amplitude=" << p.amplitude << ", base_freq=" << p.base_freq
     << ", inertia=" << s.dyn.inertia << ", damping=" << s.dyn.damping << ")";
  return os.str();
}

}  // namespace

void PopulationConfig::validate() const {
  require(!fmax_nominal.empty(), ErrorCode::kConfig, "fmax_nominal is empty");
  for (double f : fmax_nominal) require(f > 0.0, ErrorCode::kConfig, "fmax_nominal must be > 0");
  check_interval(fmax_multiplier, "fmax_multiplier", true);
  check_interval(tau_act, "tau_act", true);
  check_interval(tau_deact, "tau_deact", true);
  require(tau_act.hi <= tau_deact.lo, ErrorCode::kConfig,
          "tau_act bounds must lie below tau_deact bounds");
  check_interval(emg_gain, "emg_gain", true);
  check_interval(emg_noise_sd, "emg_noise_sd", false);
  require(emg_noise_sd.lo >= 0.0, ErrorCode::kConfig, "emg_noise_sd must be >= 0");
  check_interval(dynamics_multiplier, "dynamics_multiplier", true);
  check_interval(arm_multiplier, "arm_multiplier", true);
  try {
    dynamics.validate();
    arms.validate(fmax_nominal.size());
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, e.what());
  }
}

void SubjectParams::validate() const {
  require(!fmax.empty() && emg_gain.size() == fmax.size(), ErrorCode::kInvalidArgument,
          "subject arrays are inconsistent");
  for (double f : fmax) require(f > 0.0, ErrorCode::kInvalidArgument, "fmax must be > 0");
  for (double g : emg_gain) require(g > 0.0, ErrorCode::kInvalidArgument, "emg_gain must be > 0");
  require(tau_act > 0.0 && tau_act <= tau_deact, ErrorCode::kInvalidArgument,
          "need 0 < tau_act <= tau_deact");
  require(emg_noise_sd >= 0.0, ErrorCode::kInvalidArgument, "emg_noise_sd must be >= 0");
  arms.validate(fmax.size());
  dyn.validate();
}

void SynthConfig::validate() const {
  require(subjects >= 1, ErrorCode::kConfig, "synth.subjects must be >= 1");
  require(trials_per_subject >= 1, ErrorCode::kConfig, "synth.trials_per_subject must be >= 1");
  require(trial_duration > 0.0, ErrorCode::kConfig, "synth.trial_duration must be > 0");
  require(fs >= 100.0, ErrorCode::kConfig, "synth.fs must be >= 100");
  require(fs_emg >= 1000.0, ErrorCode::kConfig, "synth.fs_emg must be >= 1000");
  require(calibration_duration > 0.0, ErrorCode::kConfig, "synth.calibration_duration must be > 0");
  check_interval(excitation.base_freq, "excitation.base_freq", true);
  check_interval(excitation.amplitude, "excitation.amplitude", true);
  require(excitation.amplitude.hi <= 1.0, ErrorCode::kConfig, "excitation amplitude must be <= 1");
  require(excitation.phase_jitter_sd >= 0.0, ErrorCode::kConfig, "phase_jitter_sd must be >= 0");
  population.validate();
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SubjectParams sample_subject(const PopulationConfig& population, int index,
                             std::uint64_t master_seed, int attempt) {
  require(index >= 0, ErrorCode::kInvalidArgument, "subject index must be >= 0");
  population.validate();
  std::mt19937_64 rng(mix_seed(mix_seed(master_seed, static_cast<std::uint64_t>(index)),
                               static_cast<std::uint64_t>(attempt)));
  SubjectParams s;
  s.id = index + 1;
  const std::size_t n = population.fmax_nominal.size();
  s.fmax.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.fmax[i] = population.fmax_nominal[i] * draw(rng, population.fmax_multiplier);
  s.tau_act = draw(rng, population.tau_act);
  s.tau_deact = draw(rng, population.tau_deact);
  s.emg_gain.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.emg_gain[i] = draw(rng, population.emg_gain);
  s.emg_noise_sd = draw(rng, population.emg_noise_sd);
  s.dyn = population.dynamics;
  s.dyn.inertia *= draw(rng, population.dynamics_multiplier);
  s.dyn.damping *= draw(rng, population.dynamics_multiplier);
  s.dyn.mass *= draw(rng, population.dynamics_multiplier);
  s.dyn.com_length *= draw(rng, population.dynamics_multiplier);
  s.arms = population.arms;
  for (double& r : s.arms.r) r *= draw(rng, population.arm_multiplier);
  s.rng_seed = rng();
  return s;
}

ExcitationProfile sample_profile(const ExcitationConfig& config, const SubjectParams& subject,
                                 int trial_index, double duration) {
  std::mt19937_64 rng(mix_seed(subject.rng_seed, 0x1000 + static_cast<std::uint64_t>(trial_index)));
  ExcitationProfile p;
  p.base_freq = draw(rng, config.base_freq);
  p.amplitude = draw(rng, config.amplitude);
  p.phase_jitter_sd = config.phase_jitter_sd;
  p.duration = duration;
  std::normal_distribution<double> normal(0.0, 1.0);
  p.phase = config.phase_jitter_sd * normal(rng);
  return p;
}

std::vector<double> excitation_trajectory(const ExcitationProfile& profile,
                                          const SubjectParams& subject, double t) {
  const double s = std::sin(2.0 * std::numbers::pi * profile.base_freq * t + profile.phase);
  std::vector<double> u(subject.arms.r.size());
  for (std::size_t n = 0; n < u.size(); ++n) {
    const double drive = subject.arms.r[n] >= 0.0 ? std::max(0.0, s) : std::max(0.0, -s);
    u[n] = std::clamp(profile.amplitude * drive, 0.0, 1.0);
  }
  return u;
}

double activation_step(double u, double a, double dt, const SubjectParams& subject) {
  require(dt > 0.0, ErrorCode::kInvalidArgument, "activation_step: dt must be > 0");
  const double tau = u >= a ? subject.tau_act : subject.tau_deact;
  return std::clamp(a + dt * (u - a) / tau, 0.0, 1.0);
}

Trial simulate_trial(const SubjectParams& subject, const ExcitationProfile& profile, double fs) {
  require(fs >= 100.0, ErrorCode::kInvalidArgument, "simulate_trial: fs must be >= 100 Hz");
  require(profile.duration > 0.0, ErrorCode::kInvalidArgument, "simulate_trial: duration must be > 0");
  subject.validate();
  const auto samples = static_cast<std::size_t>(std::llround(profile.duration * fs));
  const std::size_t n = subject.muscles();
  const double dt = 1.0 / fs;

  Trial trial;
  trial.fs = fs;
  trial.emg_fs = fs;
  trial.t.resize(samples);
  trial.angle.resize(samples);
  trial.forces = Matrix(samples, n);
  trial.activation = Matrix(samples, n);

  std::vector<double> a(n, 0.0);
  std::vector<double> force(n);
  double theta = 0.0;
  double theta_dot = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = static_cast<double>(k) * dt;
    trial.t[k] = t;
    trial.angle[k] = theta;
    for (std::size_t i = 0; i < n; ++i) {
      force[i] = a[i] * subject.fmax[i];
      trial.forces(k, i) = force[i];
      trial.activation(k, i) = a[i];
    }
    const double tau = joint_torque(force, subject.arms);
    theta_dot += dt * forward_accel(subject.dyn, theta, theta_dot, tau);
    theta += dt * theta_dot;
    if (!(std::abs(theta) <= std::numbers::pi / 2.0)) {
      fail(ErrorCode::kUnstable, "simulation left |theta| <= pi/2 at t=" + std::to_string(t) +
                                     " s for " + describe(subject, profile));
    }
    const std::vector<double> u = excitation_trajectory(profile, subject, t);
    for (std::size_t i = 0; i < n; ++i) a[i] = activation_step(u[i], a[i], dt, subject);
  }
  return trial;
}

double max_trial_residual(const Trial& trial, const WristDynamicsParams& dyn,
                          const MomentArms& arms) {
  const std::size_t len = trial.angle.size();
  const double dt = 1.0 / trial.fs;
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < len; ++k) {
    JointState s;
    s.theta = trial.angle[k];
    s.theta_dot = (trial.angle[k + 1] - trial.angle[k - 1]) / (2.0 * dt);
    s.theta_ddot = (trial.angle[k + 1] - 2.0 * trial.angle[k] + trial.angle[k - 1]) / (dt * dt);
    const double tau = joint_torque(trial.forces.row(k), arms);
    worst = std::max(worst, std::abs(eom_residual(dyn, s, tau)));
  }
  return worst;
}

Matrix synthesize_raw_emg(const Matrix& activations, double fs, const SubjectParams& subject,
                          double fs_emg, std::uint64_t stream) {
  require(fs_emg >= 1000.0, ErrorCode::kInvalidArgument, "fs_emg must be >= 1000 Hz");
  require(activations.cols == subject.muscles(), ErrorCode::kDimension,
          "activation columns do not match subject muscle count");
  require(activations.rows >= 2, ErrorCode::kLength, "need at least two activation samples");

  const BiquadCascade band =
      design_butterworth(FilterKind::kHighpass, 4, 20.0, fs_emg)
          .then(design_butterworth(FilterKind::kLowpass, 4, 450.0, fs_emg));
  // Unit-variance normalisation of filtered white noise: sum of h^2.
  double energy = 0.0;
  {
    BiquadCascade probe = band;
    probe.reset();
    const auto len = static_cast<std::size_t>(4.0 * fs_emg);
    for (std::size_t i = 0; i < len; ++i) {
      const double h = probe.step(i == 0 ? 1.0 : 0.0);
      energy += h * h;
    }
  }
  const double carrier_scale = 1.0 / std::sqrt(energy);
  const auto warmup = static_cast<std::size_t>(fs_emg);

  Matrix out;
  for (std::size_t c = 0; c < activations.cols; ++c) {
    const std::vector<double> act = resample_linear(activations.column(c), fs, fs_emg);
    if (c == 0) out = Matrix(act.size(), activations.cols);
    std::mt19937_64 rng(mix_seed(mix_seed(subject.rng_seed, 0x2000 + stream), c));
    std::normal_distribution<double> normal(0.0, 1.0);
    BiquadCascade carrier = band;
    carrier.reset();
    for (std::size_t i = 0; i < warmup; ++i) carrier.step(normal(rng));
    for (std::size_t i = 0; i < act.size(); ++i) {
      const double carrier_v = carrier.step(normal(rng)) * carrier_scale;
      const double sensor = normal(rng);
      out(i, c) = carrier_v * act[i] * subject.emg_gain[c] + subject.emg_noise_sd * sensor;
    }
  }
  return out;
}

const SubjectRecord& Dataset::subject(int id) const {
  for (const auto& s : subjects) {
    if (s.params.id == id) return s;
  }
  fail(ErrorCode::kData, "dataset has no subject with id " + std::to_string(id));
}

Dataset generate_dataset(const SynthConfig& config, std::uint64_t master_seed) {
  config.validate();
  Dataset ds;
  ds.kind = DatasetKind::kRaw;
  ds.fs = config.fs;
  ds.fs_emg = config.fs_emg;
  for (std::size_t n = 0; n < config.population.fmax_nominal.size(); ++n) {
    ds.muscles.emplace_back(n < kMuscleNames.size() ? std::string(kMuscleNames[n])
                                                     : "M" + std::to_string(n + 1));
  }

  for (int index = 0; index < config.subjects; ++index) {
    SubjectRecord rec;
    bool ok = false;
    std::string last_error;
    for (int attempt = 0; attempt <= config.max_resample_attempts && !ok; ++attempt) {
      rec.params = sample_subject(config.population, index, master_seed, attempt);
      rec.trials.clear();
      try {
        for (int k = 0; k < config.trials_per_subject; ++k) {
          const ExcitationProfile profile =
              sample_profile(config.excitation, rec.params, k, config.trial_duration);
          Trial trial = simulate_trial(rec.params, profile, config.fs);
          trial.name = "s" + std::to_string(rec.params.id) + "_t" + std::to_string(k);
          trial.emg = synthesize_raw_emg(trial.activation, config.fs, rec.params, config.fs_emg,
                                         static_cast<std::uint64_t>(k));
          trial.emg_fs = config.fs_emg;
          rec.trials.push_back(std::move(trial));
        }
        ok = true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kUnstable) throw;
        last_error = e.what();
      }
    }
    require(ok, ErrorCode::kUnstable,
            "could not draw a stable subject after resampling: " + last_error);

    const auto cal_len = static_cast<std::size_t>(std::llround(config.calibration_duration * config.fs));
    const Matrix ones(cal_len, rec.params.muscles(), 1.0);
    rec.calibration.name = "s" + std::to_string(rec.params.id) + "_mvc";
    rec.calibration.fs = config.fs;
    rec.calibration.emg_fs = config.fs_emg;
    rec.calibration.emg = synthesize_raw_emg(ones, config.fs, rec.params, config.fs_emg, 1000);
    ds.subjects.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace pimtl
