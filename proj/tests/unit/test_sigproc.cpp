// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "sigproc.hpp"

#include <numbers>

#include "synth.hpp"
#include "test_util.hpp"

using namespace pimtl;
using std::numbers::pi;

namespace {

// Analogue Butterworth magnitude after bilinear prewarping.
double butterworth_db(FilterKind kind, int order, double fc, double f, double fs) {
  const double ratio = std::tan(pi * f / fs) / std::tan(pi * fc / fs);
  const double x = kind == FilterKind::kLowpass ? ratio : 1.0 / ratio;
  return -10.0 * std::log10(1.0 + std::pow(x, 2.0 * order));
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

std::vector<double> sine(std::size_t n, double f, double fs, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * pi * f * static_cast<double>(i) / fs);
  return x;
}

}  // namespace

TEST_CASE("Butterworth magnitude matches the prewarped analogue prototype") {
  const double fs = 2000.0;
  for (int order : {2, 4}) {
    for (FilterKind kind : {FilterKind::kLowpass, FilterKind::kHighpass}) {
      const double fc = kind == FilterKind::kLowpass ? 450.0 : 20.0;
      const BiquadCascade f = design_butterworth(kind, order, fc, fs);
      CHECK(f.order() == order);
      CHECK(f.stable());
      CHECK(f.magnitude_db(fc, fs) == doctest::Approx(-10.0 * std::log10(2.0)).epsilon(1e-6));
      for (double freq : {1.0, 5.0, 10.0, 40.0, 100.0, 300.0, 600.0, 900.0}) {
        CHECK(f.magnitude_db(freq, fs) ==
              doctest::Approx(butterworth_db(kind, order, fc, freq, fs)).epsilon(1e-6).scale(1.0));
      }
    }
  }
  const BiquadCascade lp4 = design_butterworth(FilterKind::kLowpass, 4, 6.0, 1000.0);
  CHECK(lp4.magnitude_db(60.0, 1000.0) < -75.0);
  CHECK(std::abs(lp4.magnitude_db(0.0, 1000.0)) < 1e-9);
}

TEST_CASE("Butterworth design validation") {
  CHECK_ERROR_CODE(design_butterworth(FilterKind::kLowpass, 3, 10.0, 1000.0), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(design_butterworth(FilterKind::kLowpass, 4, 600.0, 1000.0), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(design_butterworth(FilterKind::kHighpass, 4, 0.0, 1000.0), ErrorCode::kInvalidArgument);
}

TEST_CASE("step filtering equals direct evaluation of the difference equation") {
  const BiquadCascade f = design_butterworth(FilterKind::kLowpass, 2, 50.0, 1000.0);
  REQUIRE(f.sections().size() == 1);
  const Biquad& q = f.sections()[0];
  std::mt19937_64 rng(3);
  const auto x = test::random_vector(200, rng);
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    y[n] = q.b0 * x[n];
    if (n >= 1) y[n] += q.b1 * x[n - 1] - q.a1 * y[n - 1];
    if (n >= 2) y[n] += q.b2 * x[n - 2] - q.a2 * y[n - 2];
  }
  BiquadCascade g = f;
  g.reset();
  for (std::size_t n = 0; n < x.size(); ++n) CHECK(g.step(x[n]) == doctest::Approx(y[n]).epsilon(1e-12));
}

TEST_CASE("filtfilt has zero phase and squared magnitude") {
  const double fs = 1000.0;
  const BiquadCascade lp = design_butterworth(FilterKind::kLowpass, 4, 20.0, fs);
  for (double f : {2.0, 10.0, 20.0}) {
    const auto x = sine(4000, f, fs);
    const auto y = filtfilt(lp, x);
    REQUIRE(y.size() == x.size());
    const double gain = std::pow(std::abs(lp.response(f, fs)), 2.0);
    for (std::size_t i = 1000; i < 3000; ++i) CHECK(std::abs(y[i] - gain * x[i]) < 2e-3);
  }
  const std::vector<double> flat(300, 2.5);
  for (double v : filtfilt(lp, flat)) CHECK(v == doctest::Approx(2.5).epsilon(1e-9));
  CHECK_ERROR_CODE(filtfilt(lp, std::vector<double>(5, 1.0)), ErrorCode::kLength);
}

TEST_CASE("rectify, normalize, resample") {
  const std::vector<double> x = {-2.0, 0.0, 1.5, -0.25};
  CHECK(full_rectify(x) == std::vector<double>{2.0, 0.0, 1.5, 0.25});
  CHECK(mvc_normalize(x, 2.0) == std::vector<double>{-1.0, 0.0, 0.75, -0.125});
  CHECK_ERROR_CODE(mvc_normalize(x, 0.0), ErrorCode::kInvalidArgument);

  std::vector<double> ramp(2001);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 3.0 + 0.5 * static_cast<double>(i) / 2000.0;
  const auto down = resample_linear(ramp, 2000.0, 1000.0);
  CHECK(down.size() == 1001);
  for (std::size_t j = 0; j < down.size(); ++j) {
    CHECK(down[j] == doctest::Approx(3.0 + 0.5 * static_cast<double>(j) / 1000.0).epsilon(1e-12));
  }
  const auto up = resample_linear(std::vector<double>{0.0, 1.0}, 1.0, 4.0);
  CHECK(up.size() == 5);
  CHECK(up[1] == doctest::Approx(0.25));
  CHECK_ERROR_CODE(resample_linear(std::vector<double>{1.0}, 1.0, 2.0), ErrorCode::kLength);

  std::vector<double> cal(100, 1.0);
  cal[0] = 50.0;
  cal[99] = 50.0;
  CHECK(mvc_reference(cal) == doctest::Approx(1.0));
}

TEST_CASE("filtfilt attenuation and pulse alignment") {
  const double fs = 1000.0;
  const BiquadCascade lp = design_butterworth(FilterKind::kLowpass, 4, 6.0, fs);
  const auto y = filtfilt(lp, sine(4000, 100.0, fs));
  double peak = 0.0;
  for (std::size_t i = 500; i < 3500; ++i) peak = std::max(peak, std::abs(y[i]));
  CHECK(peak <= 1e-3);

  std::vector<double> tri(1001, 0.0);
  for (std::size_t i = 400; i <= 600; ++i) tri[i] = 1.0 - std::abs(static_cast<double>(i) - 500.0) / 100.0;
  const auto smooth = filtfilt(lp, tri);
  CHECK(std::max_element(smooth.begin(), smooth.end()) - smooth.begin() == 500);
}

TEST_CASE("impulse responses decay") {
  const double fs_raw = 2000.0, fs = 1000.0;
  for (const auto& [f, rate] : {std::pair{design_butterworth(FilterKind::kHighpass, 4, 20.0, fs_raw), fs_raw},
                                std::pair{design_butterworth(FilterKind::kLowpass, 4, 450.0, fs_raw), fs_raw},
                                std::pair{design_butterworth(FilterKind::kLowpass, 4, 6.0, fs), fs}}) {
    BiquadCascade g = f;
    g.reset();
    const auto n = static_cast<std::size_t>(6.0 * rate);
    double tail = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = g.step(i == 0 ? 1.0 : 0.0);
      if (static_cast<double>(i) >= 5.0 * rate) tail = std::max(tail, std::abs(v));
    }
    CHECK(tail < 1e-9);
  }
}

TEST_CASE("rectify and normalize examples") {
  const std::vector<double> x = {-1.0, 2.0, -3.0};
  CHECK(full_rectify(x) == std::vector<double>{1.0, 2.0, 3.0});
  const std::vector<double> pos = {0.0, 0.5, 7.0};
  CHECK(full_rectify(pos) == pos);
  std::mt19937_64 rng(12);
  const auto r = test::random_vector(50, rng);
  CHECK(full_rectify(full_rectify(r)) == full_rectify(r));

  CHECK(mvc_normalize(std::vector<double>(8, 0.37), 0.37) == std::vector<double>(8, 1.0));
  CHECK(mvc_normalize(std::vector<double>(8, 0.0), 0.37) == std::vector<double>(8, 0.0));
}

TEST_CASE("resampling examples") {
  std::mt19937_64 rng(13);
  const auto x = test::random_vector(40, rng);
  CHECK(resample_linear(x, 1000.0, 1000.0) == x);
  const auto s = sine(4001, 5.0, 2000.0);
  const auto d = resample_linear(s, 2000.0, 1000.0);
  REQUIRE(d.size() == 2001);
  double dev = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    dev = std::max(dev, std::abs(d[j] - std::sin(2.0 * pi * 5.0 * static_cast<double>(j) / 1000.0)));
  }
  CHECK(dev <= 1e-3);
}

TEST_CASE("calibration envelope recovers full activation") {
  PopulationConfig pop;
  const SubjectParams s = sample_subject(pop, 2, 5);
  const std::size_t n = 2000;
  const Matrix cal = synthesize_raw_emg(Matrix(n, s.muscles(), 1.0), 1000.0, s, 2000.0, 7);
  const EnvelopeSettings settings;
  for (std::size_t c = 0; c < s.muscles(); ++c) {
    const double mvc = mvc_reference(emg_envelope(cal.column(c), 2000.0, settings));
    const auto env = preprocess_channel(cal.column(c), 2000.0, mvc, 1000.0, settings);
    double sq = 0.0;
    for (std::size_t k = n / 10; k < n - n / 10; ++k) sq += (env[k] - 1.0) * (env[k] - 1.0);
    CHECK(std::sqrt(sq / static_cast<double>(n - 2 * (n / 10))) <= 0.1);
  }
}

TEST_CASE("windowing") {
  Trial t;
  t.fs = 1000.0;
  const std::size_t n = 100, m = 2;
  t.t.resize(n);
  t.angle.resize(n);
  t.emg = Matrix(n, m);
  t.forces = Matrix(n, m);
  for (std::size_t k = 0; k < n; ++k) {
    t.t[k] = static_cast<double>(k) / 1000.0;
    t.angle[k] = -static_cast<double>(k);
    for (std::size_t c = 0; c < m; ++c) {
      t.emg(k, c) = static_cast<double>(10 * k + c);
      t.forces(k, c) = static_cast<double>(100 * k + c);
    }
  }
  const WindowBatch b = make_windows(t, 16, 1);
  CHECK(b.count == 85);
  CHECK(b.channels == 3);
  CHECK(b.contiguous);
  CHECK(b.dt == doctest::Approx(1e-3));
  for (std::size_t i = 0; i < b.count; i += 7) {
    const auto in = b.input(i);
    CHECK(in[0] == 10.0 * static_cast<double>(i));
    CHECK(in[16 + 15] == 10.0 * static_cast<double>(i + 15) + 1.0);
    CHECK(in[32] == 0.0);
    CHECK(in[47] == doctest::Approx(1.0));
    CHECK(b.end_index[i] == i + 15);
    CHECK(b.target(i)[0] == 100.0 * static_cast<double>(i + 15));
    CHECK(b.target(i)[2] == -static_cast<double>(i + 15));
  }
  for (std::size_t i = 0; i < b.count; ++i) {
    for (std::size_t c = 0; c < m; ++c) CHECK(b.target(i)[c] == t.forces(i + 15, c));
    CHECK(b.target(i)[m] == t.angle[i + 15]);
  }
  CHECK(make_windows(t, 16, 4).count == 22);
  CHECK_ERROR_CODE(make_windows(t, 101, 1), ErrorCode::kLength);
  CHECK_ERROR_CODE(make_windows(t, 5, 1), ErrorCode::kInvalidArgument);
  t.emg = Matrix(2 * n, m);
  CHECK_ERROR_CODE(make_windows(t, 16, 1), ErrorCode::kDimension);
}

TEST_CASE("preprocessing recovers the activation from synthetic EMG") {
  PopulationConfig pop;
  const SubjectParams s = sample_subject(pop, 0, 11);
  const double fs = 1000.0, fs_emg = 2000.0;
  const std::size_t n = 4000;
  Matrix act(n, s.muscles());
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t c = 0; c < s.muscles(); ++c) {
      act(k, c) = 0.3 + 0.2 * std::sin(2.0 * pi * (0.7 + 0.1 * static_cast<double>(c)) * static_cast<double>(k) / fs);
    }
  }
  const Matrix emg = synthesize_raw_emg(act, fs, s, fs_emg, 1);
  const Matrix full = synthesize_raw_emg(Matrix(n, s.muscles(), 1.0), fs, s, fs_emg, 2);
  const EnvelopeSettings settings;
  for (std::size_t c = 0; c < s.muscles(); ++c) {
    const double mvc = mvc_reference(emg_envelope(full.column(c), fs_emg, settings));
    const auto env = preprocess_channel(emg.column(c), fs_emg, mvc, fs, settings);
    REQUIRE(env.size() == n);
    CHECK(correlation(env, act.column(c)) >= 0.95);
    for (double v : env) {
      CHECK(v >= 0.0);
      CHECK(v <= settings.clamp_max);
    }
  }
}
