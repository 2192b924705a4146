// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// sEMG preprocessing: Butterworth band-pass, full-wave rectification,
// envelope low-pass, MVC normalisation, linear resampling and windowing.

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "matrix.hpp"

namespace pimtl {

struct Trial;

struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  // H(z) evaluated at z = exp(j * omega), omega in rad/sample.
  std::complex<double> response(double omega) const;
  bool stable() const;
};

enum class FilterKind { kLowpass, kHighpass };

// Cascade of second-order sections in transposed direct form II.
// Holds its own per-section state; do not share one instance between streams.
class BiquadCascade {
 public:
  BiquadCascade() = default;
  explicit BiquadCascade(std::vector<Biquad> sections);

  const std::vector<Biquad>& sections() const noexcept { return sections_; }
  int order() const noexcept { return static_cast<int>(2 * sections_.size()); }

  std::complex<double> response(double freq_hz, double fs) const;
  double magnitude_db(double freq_hz, double fs) const;
  bool stable() const;

  // Appends the sections of `other` (e.g. high-pass followed by low-pass).
  BiquadCascade then(const BiquadCascade& other) const;

  void reset();
  // Sets state to the steady state for a constant input `x`.
  void settle(double x);
  double step(double x);
  // Filters a whole signal from the current state.
  void process(std::span<double> signal);

 private:
  struct State {
    double z1 = 0.0, z2 = 0.0;
  };
  std::vector<Biquad> sections_;
  std::vector<State> state_;
};

BiquadCascade design_butterworth(FilterKind kind, int order, double fc, double fs);

// Zero-phase forward/backward filtering with odd-reflection padding and
// steady-state initial conditions.
std::vector<double> filtfilt(const BiquadCascade& cascade, std::span<const double> signal);

std::vector<double> full_rectify(std::span<const double> signal);

std::vector<double> mvc_normalize(std::span<const double> envelope, double mvc_value);

std::vector<double> resample_linear(std::span<const double> signal, double fs_in, double fs_out);

struct EnvelopeSettings {
  int bandpass_order = 4;
  double highpass_hz = 20.0;
  double lowpass_hz = 450.0;
  int envelope_order = 4;
  double envelope_hz = 6.0;
  double clamp_max = 1.5;
  bool operator==(const EnvelopeSettings&) const = default;
};

// bandpass -> rectify -> envelope low-pass, at the raw sampling rate, without
// normalisation.
std::vector<double> emg_envelope(std::span<const double> raw, double fs_raw,
                                 const EnvelopeSettings& settings);

// MVC reference from a calibration envelope: mean over the central 80 %.
double mvc_reference(std::span<const double> calibration_envelope);

// Full chain: envelope, MVC-normalise, clamp to [0, clamp_max], resample.
std::vector<double> preprocess_channel(std::span<const double> raw, double fs_raw, double mvc,
                                       double fs_out, const EnvelopeSettings& settings);

// Network inputs for consecutive windows of one trial.
struct WindowBatch {
  std::size_t count = 0;
  std::size_t channels = 0;  // N emg + 1 time
  std::size_t width = 0;     // W
  std::vector<double> inputs;   // count x channels x width
  std::vector<double> targets;  // count x channels: forces then angle
  std::vector<std::size_t> end_index;  // trial sample index of each window's last sample
  double dt = 0.0;
  bool contiguous = false;

  std::span<const double> input(std::size_t i) const {
    return {inputs.data() + i * channels * width, channels * width};
  }
  std::span<const double> target(std::size_t i) const {
    return {targets.data() + i * channels, channels};
  }
};

// Window i covers samples [i*stride, i*stride + W). Channels are the N EMG
// envelopes plus the sample time within the window scaled to [0, 1]; the
// target is taken at the window's last sample. Requires envelope-rate EMG
// (emg rows == trial length).
WindowBatch make_windows(const Trial& trial, std::size_t width, std::size_t stride);

}  // namespace pimtl
