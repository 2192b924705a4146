// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "model.hpp"

#include <cmath>

#include "errors.hpp"
#include "synth.hpp"

namespace pimtl {

using nn::Mode;
using nn::NormStats;
using nn::Tensor;

std::size_t ModelConfig::feature_width() const {
  const auto conv_out = [this](std::size_t w) { return (w + 2 * padding - kernel) / stride + 1; };
  return conv_out(conv_out(window));
}

void ModelConfig::validate() const {
  require(input_channels >= 1 && outputs >= 2, ErrorCode::kConfig,
          "model needs >= 1 input channel and >= 2 outputs");
  require(window >= 1 && conv_channels >= 1 && hidden >= 1 && kernel >= 1 && stride >= 1,
          ErrorCode::kConfig, "model sizes must be >= 1");
  require(window + 2 * padding >= kernel, ErrorCode::kConfig, "window too small for kernel");
  require(dropout >= 0.0 && dropout < 1.0, ErrorCode::kConfig, "dropout must be in [0, 1)");
  require(bn_eps > 0.0 && bn_momentum > 0.0 && bn_momentum <= 1.0, ErrorCode::kConfig,
          "invalid batch-norm settings");
}

OutputScaling OutputScaling::identity(std::size_t outputs) {
  return OutputScaling{std::vector<double>(outputs, 0.0), std::vector<double>(outputs, 1.0)};
}

PiCnnModel::PiCnnModel(const ModelConfig& config, std::uint64_t seed)
    : scaling(OutputScaling::identity(config.outputs)),
      config_(config),
      conv1_(config.input_channels, config.conv_channels, config.kernel, config.padding, config.stride),
      conv2_(config.conv_channels, config.conv_channels, config.kernel, config.padding, config.stride),
      bn1_(config.conv_channels, config.bn_eps, config.bn_momentum),
      bn2_(config.conv_channels, config.bn_eps, config.bn_momentum),
      ln3_(config.hidden, config.bn_eps),
      ln4_(config.hidden, config.bn_eps),
      drop1_(config.dropout, true, config.channel_dropout),
      drop2_(config.dropout, true, config.channel_dropout),
      drop3_(config.dropout),
      drop4_(config.dropout),
      dense1_(config.feature_size(), config.hidden),
      dense2_(config.hidden, config.hidden),
      head_(config.hidden, config.outputs),
      rng_(mix_seed(seed, 1)) {
  config.validate();
  std::mt19937_64 init_rng(mix_seed(seed, 0));
  conv1_.init(init_rng);
  conv2_.init(init_rng);
  dense1_.init(init_rng);
  dense2_.init(init_rng);
  head_.init(init_rng);

  nn::ParamGroup feature{kFeatureGroup, {}, false, {}};
  feature.params = {{"conv1.weight", &conv1_.weight}, {"conv1.bias", &conv1_.bias},
                    {"bn1.gamma", &bn1_.gamma},       {"bn1.beta", &bn1_.beta},
                    {"conv2.weight", &conv2_.weight}, {"conv2.bias", &conv2_.bias},
                    {"bn2.gamma", &bn2_.gamma},       {"bn2.beta", &bn2_.beta}};
  nn::ParamGroup subject{kSubjectGroup, {}, false, {}};
  subject.params = {{"dense1.weight", &dense1_.weight}, {"dense1.bias", &dense1_.bias},
                    {"ln3.gamma", &ln3_.gamma},         {"ln3.beta", &ln3_.beta},
                    {"dense2.weight", &dense2_.weight}, {"dense2.bias", &dense2_.bias},
                    {"ln4.gamma", &ln4_.gamma},         {"ln4.beta", &ln4_.beta},
                    {"head.weight", &head_.weight},     {"head.bias", &head_.bias}};
  groups_ = {std::move(feature), std::move(subject)};
}

nn::ParamGroup& PiCnnModel::group(const std::string& name) {
  for (auto& g : groups_) {
    if (g.name == name) return g;
  }
  fail(ErrorCode::kInvalidArgument, "no parameter group named " + name);
}

void PiCnnModel::freeze_features(bool frozen) { group(kFeatureGroup).frozen = frozen; }

bool PiCnnModel::features_frozen() const { return groups_.front().frozen; }

NormStats PiCnnModel::train_stats() const {
  if (norm_override_) return *norm_override_;
  if (calibrating_) return NormStats::kBatch;
  for (const nn::BatchNorm* bn : {&bn1_, &bn2_}) {
    if (!bn->stats_initialized) return NormStats::kBatch;
  }
  return NormStats::kRunning;
}

Tensor PiCnnModel::features(const Tensor& input, Mode mode) {
  require(input.shape.size() == 3 && input.shape[1] == config_.input_channels &&
              input.shape[2] == config_.window,
          ErrorCode::kDimension,
          "model expects B x " + std::to_string(config_.input_channels) + " x " +
              std::to_string(config_.window) + " input, got " + nn::shape_string(input.shape));
  const Mode m = features_frozen() ? Mode::kInfer : mode;
  const NormStats stats = m == Mode::kInfer ? NormStats::kRunning : train_stats();
  Tensor x = conv1_.forward(input);
  x = relu1_.forward(x);
  x = bn1_.forward(x, stats);
  x = drop1_.forward(x, m, rng_);
  x = conv2_.forward(x);
  x = relu2_.forward(x);
  x = bn2_.forward(x, stats);
  x = drop2_.forward(x, m, rng_);
  conv_out_shape_ = x.shape;
  x.shape = {x.shape[0], x.shape[1] * x.shape[2]};
  last_forward_through_features_ = true;
  return x;
}

Tensor PiCnnModel::head(const Tensor& feats, Mode mode) {
  require(feats.shape.size() == 2 && feats.shape[1] == config_.feature_size(), ErrorCode::kDimension,
          "model head expects B x " + std::to_string(config_.feature_size()) + " features, got " +
              nn::shape_string(feats.shape));
  Tensor x = dense1_.forward(feats);
  x = relu3_.forward(x);
  x = ln3_.forward(x);
  x = drop3_.forward(x, mode, rng_);
  x = dense2_.forward(x);
  x = relu4_.forward(x);
  x = ln4_.forward(x);
  x = drop4_.forward(x, mode, rng_);
  x = head_.forward(x);
  const std::size_t outs = config_.outputs;
  for (std::size_t b = 0; b < x.shape[0]; ++b) {
    for (std::size_t j = 0; j < outs; ++j) {
      double& v = x.values[b * outs + j];
      v = scaling.offset[j] + scaling.scale[j] * v;
    }
  }
  last_forward_through_features_ = false;
  return x;
}

Tensor PiCnnModel::forward(const Tensor& input, Mode mode) {
  Tensor f = features(input, mode);
  Tensor y = head(f, mode);
  last_forward_through_features_ = true;
  return y;
}

void PiCnnModel::backward(const Tensor& grad_out) {
  const std::size_t outs = config_.outputs;
  require(grad_out.shape.size() == 2 && grad_out.shape[1] == outs, ErrorCode::kDimension,
          "model backward: gradient must be B x " + std::to_string(outs));
  Tensor g = grad_out;
  for (std::size_t b = 0; b < g.shape[0]; ++b) {
    for (std::size_t j = 0; j < outs; ++j) g.values[b * outs + j] *= scaling.scale[j];
  }
  const bool into_features = last_forward_through_features_ && !features_frozen();
  g = head_.backward(g, true);
  g = drop4_.backward(g);
  g = ln4_.backward(g);
  g = relu4_.backward(g);
  g = dense2_.backward(g, true);
  g = drop3_.backward(g);
  g = ln3_.backward(g);
  g = relu3_.backward(g);
  g = dense1_.backward(g, into_features);
  if (!into_features) return;
  g.shape = conv_out_shape_;
  g = drop2_.backward(g);
  g = bn2_.backward(g);
  g = relu2_.backward(g);
  g = conv2_.backward(g, true);
  g = drop1_.backward(g);
  g = bn1_.backward(g);
  g = relu1_.backward(g);
  conv1_.backward(g, false);
}

void PiCnnModel::calibrate_norms(const Tensor& input) {
  for (nn::BatchNorm* bn : norms()) {
    if (features_frozen()) continue;
    bn->stats_initialized = false;
  }
  nn::Dropout* drops[] = {&drop1_, &drop2_, &drop3_, &drop4_};
  std::vector<bool> shared;
  for (auto* d : drops) {
    shared.push_back(d->shared_mask);
    d->shared_mask = false;
  }
  auto restore = [&] {
    calibrating_ = false;
    for (std::size_t i = 0; i < 4; ++i) drops[i]->shared_mask = shared[i];
  };
  calibrating_ = true;
  try {
    forward(input, Mode::kTrain);
  } catch (...) {
    restore();
    throw;
  }
  restore();
}

void PiCnnModel::zero_grad() {
  for (auto& grp : groups_) {
    for (auto& p : grp.params) p.tensor->zero_grad();
  }
}

std::vector<PiCnnModel::NamedTensor> PiCnnModel::parameters() {
  std::vector<NamedTensor> out;
  for (auto& grp : groups_) {
    for (auto& p : grp.params) out.push_back({p.name, p.tensor});
  }
  return out;
}

std::vector<nn::BatchNorm*> PiCnnModel::norms() { return {&bn1_, &bn2_}; }

std::vector<std::string> PiCnnModel::norm_names() const { return {"bn1", "bn2"}; }

std::vector<unsigned char> PiCnnModel::relu_pattern() const {
  std::vector<unsigned char> out;
  for (const nn::Relu* r : {&relu1_, &relu2_, &relu3_, &relu4_}) {
    out.insert(out.end(), r->active().begin(), r->active().end());
  }
  return out;
}

// ------------------------------------------------------------------ losses

double mse_data_loss(std::span<const double> pred, std::span<const double> target, std::size_t rows,
                     std::size_t cols, std::vector<double>* grad, std::span<const double> weights,
                     std::vector<double>* per_output) {
  require(pred.size() == rows * cols && target.size() == rows * cols, ErrorCode::kDimension,
          "mse_data_loss: prediction/target shape mismatch");
  require(rows > 0, ErrorCode::kDimension, "mse_data_loss: empty batch");
  require(weights.empty() || weights.size() == cols, ErrorCode::kDimension,
          "mse_data_loss: weight count mismatch");
  const double inv_rows = 1.0 / static_cast<double>(rows);
  if (grad) grad->assign(rows * cols, 0.0);
  if (per_output) per_output->assign(cols, 0.0);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double w = weights.empty() ? 1.0 : weights[c];
      const double e = pred[r * cols + c] - target[r * cols + c];
      loss += w * e * e * inv_rows;
      if (per_output) (*per_output)[c] += e * e * inv_rows;
      if (grad) (*grad)[r * cols + c] = 2.0 * w * e * inv_rows;
    }
  }
  return loss;
}

FdDerivatives fd_derivatives(std::span<const double> theta, double dt) {
  require(theta.size() >= 3, ErrorCode::kLength, "fd_derivatives: need at least 3 samples");
  require(dt > 0.0, ErrorCode::kInvalidArgument, "fd_derivatives: dt must be > 0");
  FdDerivatives d;
  const std::size_t n = theta.size() - 2;
  d.theta_dot.resize(n);
  d.theta_ddot.resize(n);
  for (std::size_t i = 1; i + 1 < theta.size(); ++i) {
    d.theta_dot[i - 1] = (theta[i + 1] - theta[i - 1]) / (2.0 * dt);
    d.theta_ddot[i - 1] = (theta[i + 1] - 2.0 * theta[i] + theta[i - 1]) / (dt * dt);
  }
  return d;
}

double physics_loss(const PhysicsSegment& seg, const WristDynamicsParams& dyn, const MomentArms& arms,
                    std::vector<double>* grad_angles, std::vector<double>* grad_forces) {
  const std::size_t steps = seg.angles.size();
  require(steps >= 3, ErrorCode::kLength, "physics_loss: segment too short");
  require(seg.forces.size() == steps * seg.muscles, ErrorCode::kDimension,
          "physics_loss: forces must be S x N");
  require(arms.size() == seg.muscles, ErrorCode::kDimension,
          "physics_loss: moment arm count does not match forces");
  dyn.validate_allow_massless();
  const FdDerivatives d = fd_derivatives(seg.angles, seg.dt);
  const std::size_t interior = steps - 2;
  const double mgl = dyn.mass * dyn.gravity * dyn.com_length;
  const double dt2 = seg.dt * seg.dt;

  if (grad_angles) grad_angles->assign(steps, 0.0);
  if (grad_forces) grad_forces->assign(steps * seg.muscles, 0.0);
  double loss = 0.0;
  for (std::size_t k = 0; k < interior; ++k) {
    const std::size_t i = k + 1;
    JointState s{seg.angles[i], d.theta_dot[k], d.theta_ddot[k]};
    const double tau = joint_torque(seg.forces.subspan(i * seg.muscles, seg.muscles), arms);
    const double res = eom_residual(dyn, s, tau);
    loss += res * res;
    const double g = 2.0 * res / static_cast<double>(interior);
    if (grad_angles) {
      (*grad_angles)[i - 1] += g * (dyn.inertia / dt2 - dyn.damping / (2.0 * seg.dt));
      (*grad_angles)[i] += g * (-2.0 * dyn.inertia / dt2 + mgl * std::cos(seg.angles[i]));
      (*grad_angles)[i + 1] += g * (dyn.inertia / dt2 + dyn.damping / (2.0 * seg.dt));
    }
    if (grad_forces) {
      for (std::size_t n = 0; n < seg.muscles; ++n) (*grad_forces)[i * seg.muscles + n] -= g * arms.r[n];
    }
  }
  return loss / static_cast<double>(interior);
}

Tensor gather_inputs(const WindowBatch& batch, std::size_t start, std::size_t count) {
  require(start + count <= batch.count, ErrorCode::kDimension, "window range out of bounds");
  Tensor x({count, batch.channels, batch.width});
  const std::size_t per = batch.channels * batch.width;
  std::copy(batch.inputs.begin() + static_cast<std::ptrdiff_t>(start * per),
            batch.inputs.begin() + static_cast<std::ptrdiff_t>((start + count) * per), x.values.begin());
  return x;
}

std::vector<double> gather_targets(const WindowBatch& batch, std::size_t start, std::size_t count) {
  require(start + count <= batch.count, ErrorCode::kDimension, "window range out of bounds");
  return {batch.targets.begin() + static_cast<std::ptrdiff_t>(start * batch.channels),
          batch.targets.begin() + static_cast<std::ptrdiff_t>((start + count) * batch.channels)};
}

namespace {

LossBreakdown loss_from_predictions(const Tensor& pred, std::span<const double> targets, bool contiguous,
                                    double dt, const WristDynamicsParams& dyn, const MomentArms& arms,
                                    const LossOptions& options, Tensor* grad_pred) {
  const std::size_t rows = pred.shape[0];
  const std::size_t outs = pred.shape[1];
  const std::size_t muscles = outs - 1;
  LossBreakdown lb;
  lb.lambda = options.lambda;
  std::vector<double> g_data;
  lb.l_data = mse_data_loss(pred.values, targets, rows, outs, grad_pred ? &g_data : nullptr,
                            options.output_weights, &lb.per_output);
  if (grad_pred) {
    *grad_pred = Tensor({rows, outs});
    grad_pred->values = g_data;
  }
  if (options.lambda != 0.0) {
    require(contiguous, ErrorCode::kInvalidArgument,
            "physics loss needs contiguous windows (contiguity error)");
    require(rows >= kMinPhysicsSegment, ErrorCode::kLength,
            "physics loss needs segments of at least " + std::to_string(kMinPhysicsSegment) + " windows");
    std::vector<double> angles(rows), forces(rows * muscles);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t n = 0; n < muscles; ++n) forces[r * muscles + n] = pred.values[r * outs + n];
      angles[r] = pred.values[r * outs + muscles];
    }
    std::vector<double> ga, gf;
    lb.l_phys = physics_loss(PhysicsSegment{angles, forces, muscles, dt}, dyn, arms,
                             grad_pred ? &ga : nullptr, grad_pred ? &gf : nullptr);
    if (grad_pred) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t n = 0; n < muscles; ++n) {
          grad_pred->values[r * outs + n] += options.lambda * gf[r * muscles + n];
        }
        grad_pred->values[r * outs + muscles] += options.lambda * ga[r];
      }
    }
  }
  lb.total = lb.l_data + lb.lambda * lb.l_phys;
  return lb;
}

bool windows_contiguous(const WindowBatch& batch, std::size_t start, std::size_t count) {
  if (!batch.contiguous) return false;
  for (std::size_t i = start + 1; i < start + count; ++i) {
    if (batch.end_index[i] != batch.end_index[i - 1] + 1) return false;
  }
  return true;
}

}  // namespace

LossBreakdown total_loss_and_grad(PiCnnModel& model, const WindowBatch& batch, std::size_t start,
                                  std::size_t count, const WristDynamicsParams& dyn,
                                  const MomentArms& arms, const LossOptions& options) {
  require(batch.channels == model.config().input_channels &&
              batch.channels == model.config().outputs,
          ErrorCode::kDimension, "window batch channel count does not match the model");
  const Tensor x = gather_inputs(batch, start, count);
  const std::vector<double> targets = gather_targets(batch, start, count);
  const Tensor pred = model.forward(x, options.mode);
  Tensor grad;
  LossBreakdown lb = loss_from_predictions(pred, targets, windows_contiguous(batch, start, count), batch.dt,
                                           dyn, arms, options, options.backward ? &grad : nullptr);
  if (options.backward) model.backward(grad);
  return lb;
}

LossBreakdown head_loss_and_grad(PiCnnModel& model, const Tensor& feats, std::span<const double> targets,
                                 bool contiguous, double dt, const WristDynamicsParams& dyn,
                                 const MomentArms& arms, const LossOptions& options) {
  const Tensor pred = model.head(feats, options.mode);
  Tensor grad;
  LossBreakdown lb = loss_from_predictions(pred, targets, contiguous, dt, dyn, arms, options,
                                           options.backward ? &grad : nullptr);
  if (options.backward) model.backward(grad);
  return lb;
}

}  // namespace pimtl
