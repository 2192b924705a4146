// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit tests.

#pragma once

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"

namespace pimtl::test {

// Checks that `expr` throws pimtl::Error with the given code.
#define CHECK_ERROR_CODE(expr, expected)                              \
  do {                                                                \
    bool thrown_ = false;                                             \
    try {                                                             \
      (void)(expr);                                                   \
    } catch (const ::pimtl::Error& e_) {                              \
      thrown_ = true;                                                 \
      CHECK_MESSAGE(e_.code() == (expected), std::string(e_.what()));              \
    }                                                                 \
    CHECK_MESSAGE(thrown_, "expected an error from " #expr);          \
  } while (0)

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Central difference of f with respect to x[i].
inline double central_difference(std::vector<double>& x, std::size_t i, const std::function<double()>& f,
                                 double h = 1e-5) {
  const double keep = x[i];
  x[i] = keep + h;
  const double up = f();
  x[i] = keep - h;
  const double down = f();
  x[i] = keep;
  return (up - down) / (2.0 * h);
}

// |a - b| / max(|a|, |b|, floor); the floor absorbs entries that are
// numerically zero.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pimtl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace pimtl::test
