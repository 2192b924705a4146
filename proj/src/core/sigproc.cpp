// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigproc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "errors.hpp"
#include "synth.hpp"

namespace pimtl {

std::complex<double> Biquad::response(double omega) const {
  const std::complex<double> z1 = std::polar(1.0, -omega);
  const std::complex<double> z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

bool Biquad::stable() const {
  // Jury conditions for z^2 + a1 z + a2.
  return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2;
}

BiquadCascade::BiquadCascade(std::vector<Biquad> sections)
    : sections_(std::move(sections)), state_(sections_.size()) {}

std::complex<double> BiquadCascade::response(double freq_hz, double fs) const {
  const double omega = 2.0 * std::numbers::pi * freq_hz / fs;
  std::complex<double> h = 1.0;
  for (const auto& s : sections_) h *= s.response(omega);
  return h;
}

double BiquadCascade::magnitude_db(double freq_hz, double fs) const {
  return 20.0 * std::log10(std::abs(response(freq_hz, fs)));
}

bool BiquadCascade::stable() const {
  return std::all_of(sections_.begin(), sections_.end(), [](const Biquad& b) { return b.stable(); });
}

BiquadCascade BiquadCascade::then(const BiquadCascade& other) const {
  std::vector<Biquad> all = sections_;
  all.insert(all.end(), other.sections_.begin(), other.sections_.end());
  return BiquadCascade(std::move(all));
}

void BiquadCascade::reset() {
  state_.assign(sections_.size(), State{});
}

void BiquadCascade::settle(double x) {
  state_.resize(sections_.size());
  for (std::size_t k = 0; k < sections_.size(); ++k) {
    const Biquad& s = sections_[k];
    const double gain = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double y = gain * x;
    state_[k].z2 = s.b2 * x - s.a2 * y;
    state_[k].z1 = s.b1 * x - s.a1 * y + state_[k].z2;
    x = y;
  }
}

double BiquadCascade::step(double x) {
  for (std::size_t k = 0; k < sections_.size(); ++k) {
    const Biquad& s = sections_[k];
    State& st = state_[k];
    const double y = s.b0 * x + st.z1;
    st.z1 = s.b1 * x - s.a1 * y + st.z2;
    st.z2 = s.b2 * x - s.a2 * y;
    x = y;
  }
  return x;
}

void BiquadCascade::process(std::span<double> signal) {
  if (state_.size() != sections_.size()) reset();
  for (double& v : signal) v = step(v);
}

BiquadCascade design_butterworth(FilterKind kind, int order, double fc, double fs) {
  require(order == 2 || order == 4, ErrorCode::kInvalidArgument,
          "butterworth order must be 2 or 4, got " + std::to_string(order));
  require(fs > 0.0 && fc > 0.0, ErrorCode::kInvalidArgument, "butterworth: fc and fs must be > 0");
  require(fc < 0.5 * fs, ErrorCode::kInvalidArgument,
          "butterworth: corner " + std::to_string(fc) + " Hz is not below Nyquist " +
              std::to_string(0.5 * fs) + " Hz");

  // Bilinear transform with pre-warping; each analog pole pair becomes one
  // section with quality factor q.
  const double k = std::tan(std::numbers::pi * fc / fs);
  const double k2 = k * k;
  std::vector<Biquad> sections;
  const int pairs = order / 2;
  for (int i = 1; i <= pairs; ++i) {
    const double q = 1.0 / (2.0 * std::sin((2.0 * i - 1.0) * std::numbers::pi / (2.0 * order)));
    const double norm = 1.0 / (1.0 + k / q + k2);
    Biquad s;
    if (kind == FilterKind::kLowpass) {
      s.b0 = k2 * norm;
      s.b1 = 2.0 * s.b0;
      s.b2 = s.b0;
    } else {
      s.b0 = norm;
      s.b1 = -2.0 * s.b0;
      s.b2 = s.b0;
    }
    s.a1 = 2.0 * (k2 - 1.0) * norm;
    s.a2 = (1.0 - k / q + k2) * norm;
    sections.push_back(s);
  }
  return BiquadCascade(std::move(sections));
}

std::vector<double> filtfilt(const BiquadCascade& cascade, std::span<const double> signal) {
  const std::size_t pad = 3 * static_cast<std::size_t>(cascade.order());
  require(signal.size() > pad, ErrorCode::kLength,
          "filtfilt: signal of length " + std::to_string(signal.size()) +
              " is too short for padding " + std::to_string(pad));
  const std::size_t n = signal.size();

  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * signal[0] - signal[pad - i];
  std::copy(signal.begin(), signal.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * signal[n - 1] - signal[n - 2 - i];

  BiquadCascade f = cascade;
  f.settle(ext.front());
  f.process(ext);
  std::reverse(ext.begin(), ext.end());
  f.settle(ext.front());
  f.process(ext);
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> full_rectify(std::span<const double> signal) {
  std::vector<double> out(signal.size());
  std::transform(signal.begin(), signal.end(), out.begin(), [](double v) { return std::abs(v); });
  return out;
}

std::vector<double> mvc_normalize(std::span<const double> envelope, double mvc_value) {
  require(mvc_value > 0.0 && std::isfinite(mvc_value), ErrorCode::kInvalidArgument,
          "mvc reference must be > 0, got " + std::to_string(mvc_value));
  std::vector<double> out(envelope.size());
  std::transform(envelope.begin(), envelope.end(), out.begin(),
                 [mvc_value](double v) { return v / mvc_value; });
  return out;
}

std::vector<double> resample_linear(std::span<const double> signal, double fs_in, double fs_out) {
  require(fs_in > 0.0 && fs_out > 0.0, ErrorCode::kInvalidArgument,
          "resample: sampling rates must be > 0");
  require(signal.size() >= 2, ErrorCode::kLength, "resample: need at least two samples");
  if (fs_in == fs_out) return {signal.begin(), signal.end()};

  const double span_s = static_cast<double>(signal.size() - 1) / fs_in;
  const auto count = static_cast<std::size_t>(std::floor(span_s * fs_out + 1e-9)) + 1;
  std::vector<double> out(count);
  for (std::size_t j = 0; j < count; ++j) {
    const double pos = static_cast<double>(j) * fs_in / fs_out;
    auto i0 = static_cast<std::size_t>(std::floor(pos));
    if (i0 >= signal.size() - 1) i0 = signal.size() - 2;
    const double frac = pos - static_cast<double>(i0);
    out[j] = signal[i0] + frac * (signal[i0 + 1] - signal[i0]);
  }
  return out;
}

std::vector<double> emg_envelope(std::span<const double> raw, double fs_raw,
                                 const EnvelopeSettings& settings) {
  const BiquadCascade bandpass =
      design_butterworth(FilterKind::kHighpass, settings.bandpass_order, settings.highpass_hz, fs_raw)
          .then(design_butterworth(FilterKind::kLowpass, settings.bandpass_order,
                                   settings.lowpass_hz, fs_raw));
  const BiquadCascade envelope_lp = design_butterworth(
      FilterKind::kLowpass, settings.envelope_order, settings.envelope_hz, fs_raw);
  return filtfilt(envelope_lp, full_rectify(filtfilt(bandpass, raw)));
}

double mvc_reference(std::span<const double> calibration_envelope) {
  const std::size_t n = calibration_envelope.size();
  require(n >= 10, ErrorCode::kLength, "mvc calibration envelope too short");
  const std::size_t lo = n / 10;
  const std::size_t hi = n - n / 10;
  double sum = 0.0;
  for (std::size_t i = lo; i < hi; ++i) sum += calibration_envelope[i];
  return sum / static_cast<double>(hi - lo);
}

std::vector<double> preprocess_channel(std::span<const double> raw, double fs_raw, double mvc,
                                       double fs_out, const EnvelopeSettings& settings) {
  std::vector<double> env = mvc_normalize(emg_envelope(raw, fs_raw, settings), mvc);
  for (double& v : env) v = std::clamp(v, 0.0, settings.clamp_max);
  return resample_linear(env, fs_raw, fs_out);
}

WindowBatch make_windows(const Trial& trial, std::size_t width, std::size_t stride) {
  require(width >= 7, ErrorCode::kInvalidArgument, "window width must be >= 7");
  require(stride >= 1, ErrorCode::kInvalidArgument, "window stride must be >= 1");
  const std::size_t len = trial.t.size();
  require(trial.emg.rows == len, ErrorCode::kDimension,
          "make_windows needs envelope-rate emg (" + std::to_string(trial.emg.rows) +
              " rows vs " + std::to_string(len) + " samples)");
  require(len >= width, ErrorCode::kLength,
          "trial of " + std::to_string(len) + " samples is shorter than window " +
              std::to_string(width));
  const std::size_t muscles = trial.emg.cols;
  require(trial.forces.rows == len && trial.forces.cols == muscles && trial.angle.size() == len,
          ErrorCode::kDimension, "make_windows: trial arrays are not length-consistent");

  WindowBatch b;
  b.count = (len - width) / stride + 1;
  b.channels = muscles + 1;
  b.width = width;
  b.dt = 1.0 / trial.fs;
  b.contiguous = stride == 1;
  b.inputs.resize(b.count * b.channels * width);
  b.targets.resize(b.count * b.channels);
  b.end_index.resize(b.count);

  for (std::size_t i = 0; i < b.count; ++i) {
    const std::size_t start = i * stride;
    double* in = b.inputs.data() + i * b.channels * width;
    for (std::size_t c = 0; c < muscles; ++c) {
      for (std::size_t w = 0; w < width; ++w) in[c * width + w] = trial.emg(start + w, c);
    }
    const std::size_t last = start + width - 1;
    const double t_span = trial.t[last] - trial.t[start];
    for (std::size_t w = 0; w < width; ++w) {
      in[muscles * width + w] = t_span > 0.0 ? (trial.t[start + w] - trial.t[start]) / t_span : 0.0;
    }
    double* tg = b.targets.data() + i * b.channels;
    for (std::size_t c = 0; c < muscles; ++c) tg[c] = trial.forces(last, c);
    tg[muscles] = trial.angle[last];
    b.end_index[i] = last;
  }
  return b;
}

}  // namespace pimtl
