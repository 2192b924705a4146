// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0

#include "dynamics.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace pimtl {

namespace {

void check_common(const WristDynamicsParams& p) {
  require(std::isfinite(p.inertia) && std::isfinite(p.damping) && std::isfinite(p.mass) &&
              std::isfinite(p.com_length) && std::isfinite(p.gravity),
          ErrorCode::kInvalidArgument, "dynamics parameters must be finite");
  require(p.damping >= 0.0, ErrorCode::kInvalidArgument, "damping must be >= 0");
  require(p.mass >= 0.0, ErrorCode::kInvalidArgument, "segment mass must be >= 0");
  require(p.com_length >= 0.0, ErrorCode::kInvalidArgument, "com length must be >= 0");
}

}  // namespace

void WristDynamicsParams::validate() const {
  check_common(*this);
  require(inertia > 0.0, ErrorCode::kInvalidArgument,
          "inertia must be > 0 (got " + std::to_string(inertia) + ")");
}

void WristDynamicsParams::validate_allow_massless() const {
  check_common(*this);
  require(inertia >= 0.0, ErrorCode::kInvalidArgument, "inertia must be >= 0");
}

MomentArms MomentArms::wrist_default() {
  return MomentArms{{0.015, 0.018, -0.014, -0.012, -0.016}};
}

void MomentArms::validate(std::size_t expected_count) const {
  require(r.size() == expected_count, ErrorCode::kDimension,
          "expected " + std::to_string(expected_count) + " moment arms, got " +
              std::to_string(r.size()));
  for (double v : r) {
    require(!std::isnan(v), ErrorCode::kInvalidArgument, "moment arm is NaN");
  }
}

double joint_torque(std::span<const double> forces, const MomentArms& arms) {
  require(forces.size() == arms.r.size(), ErrorCode::kDimension,
          "joint_torque: " + std::to_string(forces.size()) + " forces vs " +
              std::to_string(arms.r.size()) + " moment arms");
  double tau = 0.0;
  for (std::size_t n = 0; n < forces.size(); ++n) tau += arms.r[n] * forces[n];
  return tau;
}

double gravity_torque(const WristDynamicsParams& p, double theta) noexcept {
  return p.mass * p.gravity * p.com_length * std::sin(theta);
}

double eom_residual(const WristDynamicsParams& p, const JointState& s, double tau) noexcept {
  return p.inertia * s.theta_ddot + p.damping * s.theta_dot + gravity_torque(p, s.theta) - tau;
}

double forward_accel(const WristDynamicsParams& p, double theta, double theta_dot, double tau) {
  require(p.inertia > 0.0, ErrorCode::kInvalidArgument, "forward_accel: inertia must be > 0");
  return (tau - p.damping * theta_dot - gravity_torque(p, theta)) / p.inertia;
}

}  // namespace pimtl
