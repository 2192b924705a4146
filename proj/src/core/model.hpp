// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// The physics-informed CNN: two convolutional blocks (conv, ReLU, batch
// norm, dropout), two fully-connected blocks (dense, ReLU, norm, dropout)
// and a linear regression head emitting N muscle forces and the joint
// angle. The composite loss is L = L_data + lambda * L_phys where L_phys is
// the mean squared equation-of-motion residual of the predictions.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "nnet.hpp"
#include "sigproc.hpp"

namespace pimtl {

struct ModelConfig {
  std::size_t input_channels = 6;   // N emg + time
  std::size_t window = 16;
  std::size_t conv_channels = 128;
  std::size_t kernel = 3;
  std::size_t padding = 3;
  std::size_t stride = 1;
  std::size_t hidden = 128;
  std::size_t outputs = 6;          // N forces + angle
  double dropout = 0.5;
  bool channel_dropout = true;      // conv blocks drop whole feature maps
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  std::size_t bn_calibration = 256;  // training windows in the initial statistics pass

  std::size_t feature_width() const;
  std::size_t feature_size() const { return conv_channels * feature_width(); }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Fixed affine map applied to the head output: y = offset + scale * z.
// Identity unless target standardisation is enabled.
struct OutputScaling {
  std::vector<double> offset;
  std::vector<double> scale;

  static OutputScaling identity(std::size_t outputs);
  bool operator==(const OutputScaling&) const = default;
};

inline constexpr const char* kFeatureGroup = "feature_extractor";
inline constexpr const char* kSubjectGroup = "subject_specific";

class PiCnnModel {
 public:
  PiCnnModel(const ModelConfig& config, std::uint64_t seed);

  PiCnnModel(const PiCnnModel&) = delete;
  PiCnnModel& operator=(const PiCnnModel&) = delete;

  const ModelConfig& config() const noexcept { return config_; }

  // B x C x W -> B x feature_size. Runs in inference mode while frozen.
  nn::Tensor features(const nn::Tensor& input, nn::Mode mode);
  // B x feature_size -> B x outputs, columns [F_1..F_N, theta].
  nn::Tensor head(const nn::Tensor& feats, nn::Mode mode);
  nn::Tensor forward(const nn::Tensor& input, nn::Mode mode);

  // Backpropagates d loss / d output of the most recent forward (or head)
  // call, accumulating parameter gradients. Stops at the feature boundary
  // when the feature extractor is frozen or only `head` was run.
  void backward(const nn::Tensor& grad_out);
  void zero_grad();

  // Sets batch-norm running statistics to the statistics of one large
  // train-mode batch, with independent dropout masks per sample. Frozen
  // layers are left untouched.
  void calibrate_norms(const nn::Tensor& input);

  std::vector<nn::ParamGroup>& groups() noexcept { return groups_; }
  const std::vector<nn::ParamGroup>& groups() const noexcept { return groups_; }
  nn::ParamGroup& group(const std::string& name);

  void freeze_features(bool frozen);
  bool features_frozen() const;

  // Number of optimiser steps taken.
  void note_train_step() { ++train_steps_; }
  std::int64_t train_steps() const noexcept { return train_steps_; }
  void set_train_steps(std::int64_t n) { train_steps_ = n; }

  // Forces the normalisation path in train mode (used by gradient checks).
  void set_norm_override(std::optional<nn::NormStats> stats) { norm_override_ = stats; }

  std::mt19937_64& rng() noexcept { return rng_; }

  // ReLU activation pattern of the most recent forward, all four layers
  // concatenated (used by gradient checks to detect kinks).
  std::vector<unsigned char> relu_pattern() const;

  OutputScaling scaling;

  // Everything a checkpoint needs, in a stable order.
  struct NamedTensor {
    std::string name;
    nn::Tensor* tensor;
  };
  std::vector<NamedTensor> parameters();
  std::vector<nn::BatchNorm*> norms();
  std::vector<std::string> norm_names() const;

 private:
  nn::NormStats train_stats() const;

  ModelConfig config_;
  nn::Conv1d conv1_, conv2_;
  nn::Relu relu1_, relu2_, relu3_, relu4_;
  nn::BatchNorm bn1_, bn2_;
  nn::LayerNorm ln3_, ln4_;
  nn::Dropout drop1_, drop2_, drop3_, drop4_;
  nn::Dense dense1_, dense2_, head_;
  std::vector<nn::ParamGroup> groups_;
  std::mt19937_64 rng_;
  std::int64_t train_steps_ = 0;
  std::optional<nn::NormStats> norm_override_;
  bool last_forward_through_features_ = false;
  bool calibrating_ = false;
  std::vector<std::size_t> conv_out_shape_;
};

// ------------------------------------------------------------------ losses

struct LossBreakdown {
  double l_data = 0.0;
  double l_phys = 0.0;
  double lambda = 1.0;
  double total = 0.0;
  std::vector<double> per_output;  // mean squared error per output column
};

// (1/B) sum_b sum_n (F^ - F)^2 + (1/B) sum_b (theta^ - theta)^2, optionally with
// per-column weights. When `grad` is given it receives d loss / d pred.
double mse_data_loss(std::span<const double> pred, std::span<const double> target, std::size_t rows,
                     std::size_t cols, std::vector<double>* grad = nullptr,
                     std::span<const double> weights = {},
                     std::vector<double>* per_output = nullptr);

struct FdDerivatives {
  std::vector<double> theta_dot;   // interior samples 1..S-2
  std::vector<double> theta_ddot;
};

FdDerivatives fd_derivatives(std::span<const double> theta, double dt);

// Predicted angles over S consecutive steps and forces (S x N, row-major).
struct PhysicsSegment {
  std::span<const double> angles;
  std::span<const double> forces;
  std::size_t muscles = 0;
  double dt = 0.0;
};

// Mean over interior steps of the squared residual
//   I theta_ddot + b theta_dot + m g l sin(theta) - sum_n r_n F_n.
double physics_loss(const PhysicsSegment& segment, const WristDynamicsParams& dyn,
                    const MomentArms& arms, std::vector<double>* grad_angles = nullptr,
                    std::vector<double>* grad_forces = nullptr);

inline constexpr std::size_t kMinPhysicsSegment = 5;

struct LossOptions {
  double lambda = 1.0;
  std::span<const double> output_weights;  // empty = unweighted
  nn::Mode mode = nn::Mode::kTrain;
  bool backward = true;
};

// Builds a B x C x W tensor from windows [start, start + count).
nn::Tensor gather_inputs(const WindowBatch& batch, std::size_t start, std::size_t count);
std::vector<double> gather_targets(const WindowBatch& batch, std::size_t start, std::size_t count);

// Composite loss over one contiguous segment of windows. Gradients are
// accumulated into the model (call zero_grad first) when options.backward.
LossBreakdown total_loss_and_grad(PiCnnModel& model, const WindowBatch& batch, std::size_t start,
                                  std::size_t count, const WristDynamicsParams& dyn,
                                  const MomentArms& arms, const LossOptions& options);

// Same loss for precomputed features (frozen extractor); gradients stop at
// the head.
LossBreakdown head_loss_and_grad(PiCnnModel& model, const nn::Tensor& feats,
                                 std::span<const double> targets, bool contiguous, double dt,
                                 const WristDynamicsParams& dyn, const MomentArms& arms,
                                 const LossOptions& options);

}  // namespace pimtl
