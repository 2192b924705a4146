// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small fixed-layer network core: 1-D convolution, ReLU, batch
// normalisation, dropout and dense layers with hand-written reverse-mode
// gradients, plus SGD with momentum over named parameter groups.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pimtl::nn {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty for activations, same size for parameters

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);

  std::size_t size() const noexcept { return values.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  void enable_grad() { grad.assign(values.size(), 0.0); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  bool operator==(const Tensor&) const = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);

enum class Mode { kTrain, kInfer };

// How a batch-norm layer normalises in a given forward pass.
enum class NormStats {
  kBatch,          // batch statistics; running statistics updated
  kRunningUpdate,  // running statistics used; batch statistics still folded in
  kRunning,        // running statistics only
};

struct Param {
  std::string name;
  Tensor* tensor = nullptr;
};

// Kaiming-uniform (fan-in) initialisation bound for ReLU stacks.
double kaiming_bound(std::size_t fan_in);

class Conv1d {
 public:
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel = 3,
         std::size_t padding = 3, std::size_t stride = 1);

  void init(std::mt19937_64& rng);
  std::size_t output_width(std::size_t width) const;

  // input B x C_in x W -> B x C_out x W'
  Tensor forward(const Tensor& input);
  // Accumulates weight/bias gradients; returns d input (empty when not needed).
  Tensor backward(const Tensor& grad_out, bool need_input_grad);

  Tensor weight;  // C_out x C_in x K
  Tensor bias;    // C_out
  std::size_t in_channels, out_channels, kernel, padding, stride;

 private:
  std::vector<double> cols_;  // per batch: (C_in*K) x W'
  std::size_t cached_batch_ = 0;
  std::size_t cached_width_ = 0;
  bool has_cache_ = false;
};

class Dense {
 public:
  Dense(std::size_t in_features, std::size_t out_features);

  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& input);  // B x D_in -> B x D_out
  Tensor backward(const Tensor& grad_out, bool need_input_grad);

  Tensor weight;  // D_out x D_in
  Tensor bias;    // D_out
  std::size_t in_features, out_features;

 private:
  Tensor input_;
  bool has_cache_ = false;
};

class Relu {
 public:
  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_out);
  // Which inputs of the last forward were positive.
  const std::vector<unsigned char>& active() const noexcept { return active_; }

 private:
  std::vector<unsigned char> active_;
  bool has_cache_ = false;
};

// Per-channel normalisation over batch (and time for 3-D inputs).
class BatchNorm {
 public:
  explicit BatchNorm(std::size_t channels, double eps = 1e-5, double momentum = 0.1);

  Tensor forward(const Tensor& input, NormStats stats);
  Tensor backward(const Tensor& grad_out);

  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
  bool stats_initialized = false;  // first statistics update copies the batch
  std::size_t channels;
  double eps;
  double momentum;

 private:
  std::vector<double> xhat_;
  std::vector<double> inv_std_;
  std::vector<std::size_t> shape_;
  bool used_batch_ = false;
  bool has_cache_ = false;
};

// Per-sample normalisation over the feature dimension of a B x D input.
class LayerNorm {
 public:
  explicit LayerNorm(std::size_t features, double eps = 1e-5);

  Tensor forward(const Tensor& input);
  Tensor backward(const Tensor& grad_out);

  Tensor gamma;
  Tensor beta;
  std::size_t features;
  double eps;

 private:
  std::vector<double> xhat_;
  std::vector<double> inv_std_;
  std::size_t batch_ = 0;
  bool has_cache_ = false;
};

// Inverted dropout. With `shared_mask`, one mask is drawn per forward call
// and broadcast over the batch dimension. With `per_channel`, a B x C x L
// input drops whole channels (one draw per channel, shared along L).
class Dropout {
 public:
  explicit Dropout(double rate = 0.5, bool shared_mask = true, bool per_channel = false);

  Tensor forward(const Tensor& input, Mode mode, std::mt19937_64& rng);
  Tensor backward(const Tensor& grad_out);

  double rate;
  bool shared_mask;
  bool per_channel;

 private:
  std::size_t mask_index(std::size_t i) const;

  std::vector<double> mask_;  // empty => identity
  std::size_t group_ = 1;     // consecutive elements sharing one draw
  std::size_t units_ = 0;     // draws per sample
  bool has_cache_ = false;
};

struct ParamGroup {
  std::string name;
  std::vector<Param> params;
  bool frozen = false;
  std::vector<std::vector<double>> velocity;  // momentum state, per param
};

struct SgdConfig {
  double lr = 0.001;
  double momentum = 0.9;
};

// Rescales the gradients of unfrozen groups so their global L2 norm is at
// most `max_norm` (no-op when max_norm <= 0). Returns the norm before
// clipping.
double clip_grad_norm(std::vector<ParamGroup>& groups, double max_norm);

// v <- mu * v + g ; p <- p - lr * v for every unfrozen group. Frozen groups
// and their momentum buffers are not touched.
void sgd_momentum_step(std::vector<ParamGroup>& groups, const SgdConfig& config);

}  // namespace pimtl::nn
