// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pimtl {

// Row-major dense matrix of doubles used for time x channel data.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r] = data[r * cols + c];
    return out;
  }

  void set_column(std::size_t c, std::span<const double> values) {
    for (std::size_t r = 0; r < rows; ++r) data[r * cols + c] = values[r];
  }

  bool empty() const noexcept { return data.empty(); }
  bool operator==(const Matrix&) const = default;
};

}  // namespace pimtl
