// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nnet.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace pimtl::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::size_t product(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

void uniform_fill(std::vector<double>& v, double bound, std::mt19937_64& rng) {
  for (double& x : v) x = (2.0 * std::generate_canonical<double, 53>(rng) - 1.0) * bound;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)), values(product(shape), fill) {}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

double kaiming_bound(std::size_t fan_in) {
  return std::sqrt(6.0 / static_cast<double>(fan_in));
}

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t pad, std::size_t s)
    : weight({out_ch, in_ch, k}),
      bias({out_ch}),
      in_channels(in_ch),
      out_channels(out_ch),
      kernel(k),
      padding(pad),
      stride(s) {
  require(in_ch > 0 && out_ch > 0 && k > 0 && s > 0, ErrorCode::kInvalidArgument,
          "conv1d: channels, kernel and stride must be > 0");
  weight.enable_grad();
  bias.enable_grad();
}

void Conv1d::init(std::mt19937_64& rng) {
  const double bound = kaiming_bound(in_channels * kernel);
  uniform_fill(weight.values, bound, rng);
  // Bias uses the PyTorch default 1/sqrt(fan_in) bound.
  uniform_fill(bias.values, 1.0 / std::sqrt(static_cast<double>(in_channels * kernel)), rng);
}

std::size_t Conv1d::output_width(std::size_t width) const {
  const std::size_t padded = width + 2 * padding;
  require(padded >= kernel, ErrorCode::kDimension, "conv1d: input narrower than kernel");
  return (padded - kernel) / stride + 1;
}

Tensor Conv1d::forward(const Tensor& input) {
  require(input.shape.size() == 3 && input.shape[1] == in_channels, ErrorCode::kDimension,
          "conv1d: expected B x " + std::to_string(in_channels) + " x W input, got " +
              shape_string(input.shape));
  const std::size_t batch = input.shape[0];
  const std::size_t width = input.shape[2];
  require(width >= 1, ErrorCode::kDimension, "conv1d: empty input");
  const std::size_t out_w = output_width(width);
  const std::size_t rows = in_channels * kernel;

  cols_.assign(batch * rows * out_w, 0.0);
  Tensor out({batch, out_channels, out_w});
  const ConstMapMat w(weight.values.data(), static_cast<Eigen::Index>(out_channels),
                      static_cast<Eigen::Index>(rows));
  for (std::size_t b = 0; b < batch; ++b) {
    double* col = cols_.data() + b * rows * out_w;
    const double* x = input.values.data() + b * in_channels * width;
    for (std::size_t c = 0; c < in_channels; ++c) {
      for (std::size_t k = 0; k < kernel; ++k) {
        double* dst = col + (c * kernel + k) * out_w;
        for (std::size_t o = 0; o < out_w; ++o) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(o * stride + k) -
                                     static_cast<std::ptrdiff_t>(padding);
          dst[o] = (pos >= 0 && pos < static_cast<std::ptrdiff_t>(width)) ? x[c * width + pos] : 0.0;
        }
      }
    }
    MapMat y(out.values.data() + b * out_channels * out_w, static_cast<Eigen::Index>(out_channels),
             static_cast<Eigen::Index>(out_w));
    const ConstMapMat colm(col, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out_w));
    y.noalias() = w * colm;
    for (std::size_t d = 0; d < out_channels; ++d) y.row(static_cast<Eigen::Index>(d)).array() += bias.values[d];
  }
  cached_batch_ = batch;
  cached_width_ = width;
  has_cache_ = true;
  return out;
}

Tensor Conv1d::backward(const Tensor& grad_out, bool need_input_grad) {
  require(has_cache_, ErrorCode::kState, "conv1d: backward called without a forward cache");
  const std::size_t batch = cached_batch_;
  const std::size_t width = cached_width_;
  const std::size_t out_w = output_width(width);
  const std::size_t rows = in_channels * kernel;
  require(grad_out.shape == std::vector<std::size_t>{batch, out_channels, out_w},
          ErrorCode::kDimension, "conv1d: upstream gradient shape mismatch");

  MapMat dw(weight.grad.data(), static_cast<Eigen::Index>(out_channels), static_cast<Eigen::Index>(rows));
  const ConstMapMat w(weight.values.data(), static_cast<Eigen::Index>(out_channels),
                      static_cast<Eigen::Index>(rows));
  Tensor grad_in;
  if (need_input_grad) grad_in = Tensor({batch, in_channels, width});
  RowMat dcol;
  for (std::size_t b = 0; b < batch; ++b) {
    const ConstMapMat g(grad_out.values.data() + b * out_channels * out_w,
                        static_cast<Eigen::Index>(out_channels), static_cast<Eigen::Index>(out_w));
    const ConstMapMat colm(cols_.data() + b * rows * out_w, static_cast<Eigen::Index>(rows),
                           static_cast<Eigen::Index>(out_w));
    dw.noalias() += g * colm.transpose();
    for (std::size_t d = 0; d < out_channels; ++d) {
      const double* gr = grad_out.values.data() + (b * out_channels + d) * out_w;
      double s = 0.0;
      for (std::size_t o = 0; o < out_w; ++o) s += gr[o];
      bias.grad[d] += s;
    }
    if (!need_input_grad) continue;
    dcol.noalias() = w.transpose() * g;
    double* dx = grad_in.values.data() + b * in_channels * width;
    for (std::size_t c = 0; c < in_channels; ++c) {
      for (std::size_t k = 0; k < kernel; ++k) {
        const double* src = dcol.data() + (c * kernel + k) * out_w;
        for (std::size_t o = 0; o < out_w; ++o) {
          const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(o * stride + k) -
                                     static_cast<std::ptrdiff_t>(padding);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(width)) dx[c * width + pos] += src[o];
        }
      }
    }
  }
  return grad_in;
}

// ----------------------------------------------------------------- Dense

Dense::Dense(std::size_t in_f, std::size_t out_f)
    : weight({out_f, in_f}), bias({out_f}), in_features(in_f), out_features(out_f) {
  require(in_f > 0 && out_f > 0, ErrorCode::kInvalidArgument, "dense: sizes must be > 0");
  weight.enable_grad();
  bias.enable_grad();
}

void Dense::init(std::mt19937_64& rng) {
  uniform_fill(weight.values, kaiming_bound(in_features), rng);
  uniform_fill(bias.values, 1.0 / std::sqrt(static_cast<double>(in_features)), rng);
}

Tensor Dense::forward(const Tensor& input) {
  require(input.shape.size() == 2 && input.shape[1] == in_features, ErrorCode::kDimension,
          "dense: expected B x " + std::to_string(in_features) + " input, got " +
              shape_string(input.shape));
  const std::size_t batch = input.shape[0];
  Tensor out({batch, out_features});
  const ConstMapMat x(input.values.data(), static_cast<Eigen::Index>(batch),
                      static_cast<Eigen::Index>(in_features));
  const ConstMapMat w(weight.values.data(), static_cast<Eigen::Index>(out_features),
                      static_cast<Eigen::Index>(in_features));
  MapMat y(out.values.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(out_features));
  y.noalias() = x * w.transpose();
  const Eigen::Map<const Eigen::RowVectorXd> bv(bias.values.data(), static_cast<Eigen::Index>(out_features));
  y.rowwise() += bv;
  input_ = input;
  has_cache_ = true;
  return out;
}

Tensor Dense::backward(const Tensor& grad_out, bool need_input_grad) {
  require(has_cache_, ErrorCode::kState, "dense: backward called without a forward cache");
  const std::size_t batch = input_.shape[0];
  require(grad_out.shape == std::vector<std::size_t>{batch, out_features}, ErrorCode::kDimension,
          "dense: upstream gradient shape mismatch");
  const ConstMapMat g(grad_out.values.data(), static_cast<Eigen::Index>(batch),
                      static_cast<Eigen::Index>(out_features));
  const ConstMapMat x(input_.values.data(), static_cast<Eigen::Index>(batch),
                      static_cast<Eigen::Index>(in_features));
  MapMat dw(weight.grad.data(), static_cast<Eigen::Index>(out_features),
            static_cast<Eigen::Index>(in_features));
  dw.noalias() += g.transpose() * x;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < out_features; ++j) bias.grad[j] += grad_out.values[b * out_features + j];
  }
  Tensor grad_in;
  if (need_input_grad) {
    grad_in = Tensor({batch, in_features});
    const ConstMapMat w(weight.values.data(), static_cast<Eigen::Index>(out_features),
                        static_cast<Eigen::Index>(in_features));
    MapMat dx(grad_in.values.data(), static_cast<Eigen::Index>(batch),
              static_cast<Eigen::Index>(in_features));
    dx.noalias() = g * w;
  }
  return grad_in;
}

// ------------------------------------------------------------------ Relu

Tensor Relu::forward(const Tensor& input) {
  Tensor out(input.shape);
  active_.resize(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool on = input.values[i] > 0.0;
    active_[i] = on;
    out.values[i] = on ? input.values[i] : 0.0;
  }
  has_cache_ = true;
  return out;
}

Tensor Relu::backward(const Tensor& grad_out) {
  require(has_cache_, ErrorCode::kState, "relu: backward called without a forward cache");
  require(grad_out.size() == active_.size(), ErrorCode::kDimension, "relu: gradient size mismatch");
  Tensor g(grad_out.shape);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = active_[i] ? grad_out.values[i] : 0.0;
  return g;
}

// ------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t ch, double e, double m)
    : gamma({ch}, 1.0),
      beta({ch}, 0.0),
      running_mean(ch, 0.0),
      running_var(ch, 1.0),
      channels(ch),
      eps(e),
      momentum(m) {
  gamma.enable_grad();
  beta.enable_grad();
}

Tensor BatchNorm::forward(const Tensor& input, NormStats stats) {
  require((input.shape.size() == 2 || input.shape.size() == 3) && input.shape[1] == channels,
          ErrorCode::kDimension, "batchnorm: expected B x " + std::to_string(channels) +
                                     " [x L] input, got " + shape_string(input.shape));
  const std::size_t batch = input.shape[0];
  const std::size_t len = input.shape.size() == 3 ? input.shape[2] : 1;
  const std::size_t count = batch * len;
  if (stats == NormStats::kRunning) {
    require(stats_initialized, ErrorCode::kState,
            "batchnorm: inference requested before running statistics were initialised");
  }
  if (stats == NormStats::kRunningUpdate && !stats_initialized) stats = NormStats::kBatch;

  std::vector<double> mean(channels, 0.0), var(channels, 0.0);
  if (stats != NormStats::kRunning) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* x = input.values.data() + (b * channels + c) * len;
        for (std::size_t l = 0; l < len; ++l) mean[c] += x[l];
      }
    }
    for (double& m : mean) m /= static_cast<double>(count);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const double* x = input.values.data() + (b * channels + c) * len;
        for (std::size_t l = 0; l < len; ++l) var[c] += (x[l] - mean[c]) * (x[l] - mean[c]);
      }
    }
    for (double& v : var) v /= static_cast<double>(count);
  }

  used_batch_ = stats == NormStats::kBatch;
  const std::vector<double>& use_mean = used_batch_ ? mean : running_mean;
  const std::vector<double>& use_var = used_batch_ ? var : running_var;
  inv_std_.resize(channels);
  for (std::size_t c = 0; c < channels; ++c) inv_std_[c] = 1.0 / std::sqrt(use_var[c] + eps);

  Tensor out(input.shape);
  xhat_.resize(input.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (b * channels + c) * len;
      for (std::size_t l = 0; l < len; ++l) {
        const double xh = (input.values[off + l] - use_mean[c]) * inv_std_[c];
        xhat_[off + l] = xh;
        out.values[off + l] = gamma.values[c] * xh + beta.values[c];
      }
    }
  }

  if (stats != NormStats::kRunning) {
    const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
    for (std::size_t c = 0; c < channels; ++c) {
      if (!stats_initialized) {
        running_mean[c] = mean[c];
        running_var[c] = var[c] * unbias;
      } else if (stats == NormStats::kBatch) {
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c] * unbias;
      } else {
        // second moment about the running mean
        const double d = mean[c] - running_mean[c];
        running_var[c] = (1.0 - momentum) * running_var[c] + momentum * (var[c] + d * d);
        running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
      }
    }
    stats_initialized = true;
  }
  shape_ = input.shape;
  has_cache_ = true;
  return out;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  require(has_cache_, ErrorCode::kState, "batchnorm: backward called without a forward cache");
  require(grad_out.shape == shape_, ErrorCode::kDimension, "batchnorm: gradient shape mismatch");
  const std::size_t batch = shape_[0];
  const std::size_t len = shape_.size() == 3 ? shape_[2] : 1;
  const double count = static_cast<double>(batch * len);

  std::vector<double> sum_dy(channels, 0.0), sum_dy_xhat(channels, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (b * channels + c) * len;
      for (std::size_t l = 0; l < len; ++l) {
        sum_dy[c] += grad_out.values[off + l];
        sum_dy_xhat[c] += grad_out.values[off + l] * xhat_[off + l];
      }
    }
  }
  for (std::size_t c = 0; c < channels; ++c) {
    gamma.grad[c] += sum_dy_xhat[c];
    beta.grad[c] += sum_dy[c];
  }

  Tensor g(shape_);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (b * channels + c) * len;
      const double scale = gamma.values[c] * inv_std_[c];
      for (std::size_t l = 0; l < len; ++l) {
        const double dy = grad_out.values[off + l];
        g.values[off + l] = used_batch_
                                ? scale * (dy - sum_dy[c] / count - xhat_[off + l] * sum_dy_xhat[c] / count)
                                : scale * dy;
      }
    }
  }
  return g;
}

// ------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(std::size_t d, double e) : gamma({d}, 1.0), beta({d}, 0.0), features(d), eps(e) {
  require(d > 0 && e > 0.0, ErrorCode::kInvalidArgument, "layernorm: features and eps must be > 0");
  gamma.enable_grad();
  beta.enable_grad();
}

Tensor LayerNorm::forward(const Tensor& input) {
  require(input.shape.size() == 2 && input.shape[1] == features, ErrorCode::kDimension,
          "layernorm: expected B x " + std::to_string(features) + " input, got " + shape_string(input.shape));
  batch_ = input.shape[0];
  const double d = static_cast<double>(features);
  Tensor out(input.shape);
  xhat_.resize(input.size());
  inv_std_.resize(batch_);
  for (std::size_t b = 0; b < batch_; ++b) {
    const double* x = input.values.data() + b * features;
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < features; ++j) mean += x[j];
    mean /= d;
    for (std::size_t j = 0; j < features; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= d;
    inv_std_[b] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < features; ++j) {
      const double xh = (x[j] - mean) * inv_std_[b];
      xhat_[b * features + j] = xh;
      out.values[b * features + j] = gamma.values[j] * xh + beta.values[j];
    }
  }
  has_cache_ = true;
  return out;
}

Tensor LayerNorm::backward(const Tensor& grad_out) {
  require(has_cache_, ErrorCode::kState, "layernorm: backward called without a forward cache");
  require(grad_out.shape == std::vector<std::size_t>{batch_, features}, ErrorCode::kDimension,
          "layernorm: gradient shape mismatch");
  const double d = static_cast<double>(features);
  Tensor g(grad_out.shape);
  for (std::size_t b = 0; b < batch_; ++b) {
    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
    for (std::size_t j = 0; j < features; ++j) {
      const std::size_t k = b * features + j;
      const double dy = grad_out.values[k];
      gamma.grad[j] += dy * xhat_[k];
      beta.grad[j] += dy;
      const double dxh = dy * gamma.values[j];
      sum_dxh += dxh;
      sum_dxh_xh += dxh * xhat_[k];
    }
    for (std::size_t j = 0; j < features; ++j) {
      const std::size_t k = b * features + j;
      const double dxh = grad_out.values[k] * gamma.values[j];
      g.values[k] = inv_std_[b] * (dxh - sum_dxh / d - xhat_[k] * sum_dxh_xh / d);
    }
  }
  return g;
}

// --------------------------------------------------------------- Dropout

Dropout::Dropout(double r, bool shared, bool channel) : rate(r), shared_mask(shared), per_channel(channel) {
  require(r >= 0.0 && r < 1.0, ErrorCode::kInvalidArgument, "dropout rate must be in [0, 1)");
}

std::size_t Dropout::mask_index(std::size_t i) const {
  const std::size_t u = i / group_;
  return shared_mask ? u % units_ : u;
}

Tensor Dropout::forward(const Tensor& input, Mode mode, std::mt19937_64& rng) {
  has_cache_ = true;
  if (mode == Mode::kInfer || rate == 0.0) {
    mask_.clear();
    return input;
  }
  const std::size_t batch = input.shape.at(0);
  group_ = per_channel && input.shape.size() == 3 ? input.shape[2] : 1;
  units_ = input.size() / batch / group_;
  mask_.resize(shared_mask ? units_ : units_ * batch);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& m : mask_) m = std::generate_canonical<double, 53>(rng) < rate ? 0.0 : keep_scale;
  Tensor out(input.shape);
  for (std::size_t i = 0; i < input.size(); ++i) out.values[i] = input.values[i] * mask_[mask_index(i)];
  return out;
}

Tensor Dropout::backward(const Tensor& grad_out) {
  require(has_cache_, ErrorCode::kState, "dropout: backward called without a forward cache");
  if (mask_.empty()) return grad_out;
  Tensor g(grad_out.shape);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = grad_out.values[i] * mask_[mask_index(i)];
  return g;
}

// ------------------------------------------------------------------- SGD

double clip_grad_norm(std::vector<ParamGroup>& groups, double max_norm) {
  double sq = 0.0;
  for (const ParamGroup& group : groups) {
    if (group.frozen) continue;
    for (const Param& p : group.params) {
      for (double g : p.tensor->grad) sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (ParamGroup& group : groups) {
      if (group.frozen) continue;
      for (Param& p : group.params) {
        for (double& g : p.tensor->grad) g *= k;
      }
    }
  }
  return norm;
}

void sgd_momentum_step(std::vector<ParamGroup>& groups, const SgdConfig& config) {
  for (ParamGroup& group : groups) {
    if (group.frozen) continue;
    if (group.velocity.size() != group.params.size()) {
      group.velocity.resize(group.params.size());
    }
    for (std::size_t i = 0; i < group.params.size(); ++i) {
      Tensor& p = *group.params[i].tensor;
      require(p.grad.size() == p.values.size(), ErrorCode::kDimension,
              "sgd: gradient buffer of " + group.params[i].name + " does not match its values");
      std::vector<double>& v = group.velocity[i];
      if (v.empty()) v.assign(p.values.size(), 0.0);
      require(v.size() == p.values.size(), ErrorCode::kDimension,
              "sgd: momentum buffer of " + group.params[i].name + " does not match its values");
      for (std::size_t k = 0; k < v.size(); ++k) {
        v[k] = config.momentum * v[k] + p.grad[k];
        p.values[k] -= config.lr * v[k];
      }
    }
  }
}

}  // namespace pimtl::nn
