// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic wrist subjects and trials. Kinetics are produced by integrating
// the dynamics module, so every emitted trial satisfies the equation of
// motion up to the integrator's discretisation error.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "matrix.hpp"

namespace pimtl {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

struct PopulationConfig {
  std::vector<double> fmax_nominal = {40.0, 45.0, 35.0, 30.0, 35.0};  // N
  Interval fmax_multiplier{0.7, 1.3};
  Interval tau_act{0.010, 0.020};      // s
  Interval tau_deact{0.040, 0.060};    // s
  Interval emg_gain{0.5, 1.5};
  Interval emg_noise_sd{0.01, 0.03};
  WristDynamicsParams dynamics{};
  Interval dynamics_multiplier{1.0, 1.0};
  MomentArms arms = MomentArms::wrist_default();
  Interval arm_multiplier{1.0, 1.0};

  void validate() const;
  bool operator==(const PopulationConfig&) const = default;
};

struct SubjectParams {
  int id = 0;
  std::vector<double> fmax;
  double tau_act = 0.015;
  double tau_deact = 0.05;
  std::vector<double> emg_gain;
  double emg_noise_sd = 0.0;
  MomentArms arms;
  WristDynamicsParams dyn;
  std::uint64_t rng_seed = 0;

  std::size_t muscles() const noexcept { return fmax.size(); }
  void validate() const;
  bool operator==(const SubjectParams&) const = default;
};

struct ExcitationProfile {
  double base_freq = 0.75;   // Hz
  double amplitude = 0.2;    // (0, 1]
  double phase_jitter_sd = 0.5;
  double duration = 2.0;     // s
  double phase = 0.0;        // rad, drawn per trial from N(0, phase_jitter_sd)
};

struct ExcitationConfig {
  Interval base_freq{0.5, 1.0};
  Interval amplitude{0.12, 0.20};
  double phase_jitter_sd = 0.5;
  bool operator==(const ExcitationConfig&) const = default;
};

// One recording. `emg` is raw (emg_fs > fs) or an envelope at `fs`.
struct Trial {
  std::string name;
  double fs = 1000.0;
  std::vector<double> t;
  double emg_fs = 1000.0;
  Matrix emg;         // emg samples x N
  Matrix forces;      // T x N, N
  std::vector<double> angle;  // rad
  Matrix activation;  // T x N ground-truth activation, optional (may be empty)

  std::size_t samples() const noexcept { return t.size(); }
  bool operator==(const Trial&) const = default;
};

// SplitMix64 step, used to derive independent RNG streams from a master seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// `attempt` > 0 redraws a subject whose parameters produced an unstable trial.
SubjectParams sample_subject(const PopulationConfig& population, int index,
                             std::uint64_t master_seed, int attempt = 0);

ExcitationProfile sample_profile(const ExcitationConfig& config, const SubjectParams& subject,
                                 int trial_index, double duration);

std::vector<double> excitation_trajectory(const ExcitationProfile& profile,
                                          const SubjectParams& subject, double t);

double activation_step(double u, double a, double dt, const SubjectParams& subject);

// Semi-implicit Euler at 1/fs with F = a * fmax. Throws kUnstable when
// |theta| exceeds pi/2. The returned trial has no EMG.
Trial simulate_trial(const SubjectParams& subject, const ExcitationProfile& profile, double fs);

// Largest |eom residual| over interior samples using central differences.
double max_trial_residual(const Trial& trial, const WristDynamicsParams& dyn,
                          const MomentArms& arms);

// Band-limited (20-450 Hz) Gaussian carrier modulated by the activation,
// plus white sensor noise. Deterministic for (subject.rng_seed, stream).
Matrix synthesize_raw_emg(const Matrix& activations, double fs, const SubjectParams& subject,
                          double fs_emg, std::uint64_t stream);

struct SubjectRecord {
  SubjectParams params;
  std::vector<Trial> trials;
  Trial calibration;         // constant-activation raw EMG, no kinetics
  std::vector<double> mvc;   // filled for envelope datasets

  bool operator==(const SubjectRecord&) const = default;
};

enum class DatasetKind { kRaw, kEnvelope };
enum class Encoding { kBinary, kCsv };

struct Dataset {
  DatasetKind kind = DatasetKind::kRaw;
  double fs = 1000.0;
  double fs_emg = 2000.0;
  std::vector<std::string> muscles;
  std::vector<SubjectRecord> subjects;

  const SubjectRecord& subject(int id) const;
  bool operator==(const Dataset&) const = default;
};

struct SynthConfig {
  int subjects = 8;
  int trials_per_subject = 5;
  double trial_duration = 2.0;   // s
  double fs = 1000.0;
  double fs_emg = 2000.0;
  double calibration_duration = 2.0;
  int max_resample_attempts = 20;
  PopulationConfig population{};
  ExcitationConfig excitation{};

  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

// Whole generation pipeline; a pure function of (config, master_seed).
Dataset generate_dataset(const SynthConfig& config, std::uint64_t master_seed);

inline constexpr int kDatasetVersion = 1;

// Builds the directory in a staging location and renames it into place.
// `extra_files` (name -> text) are written into the same directory.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir, Encoding encoding,
                   const std::map<std::string, std::string>& extra_files = {});
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace pimtl
