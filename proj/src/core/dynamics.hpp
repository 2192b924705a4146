// Copyright 2026 The pimtl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Single degree-of-freedom wrist model shared by the simulator and the
// physics loss:
//
//   I * theta_ddot + b * theta_dot + m * g * l * sin(theta) = sum_n r_n * F_n
//
// Flexion is positive. Extensor moment arms are negative.

#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace pimtl {

inline constexpr std::size_t kDefaultMuscleCount = 5;
inline constexpr std::array<std::string_view, kDefaultMuscleCount> kMuscleNames = {
    "FCR", "FCU", "ECRL", "ECRB", "ECU"};

struct WristDynamicsParams {
  double inertia = 0.004;      // kg m^2
  double damping = 0.02;       // N m s / rad
  double mass = 0.6;           // kg
  double com_length = 0.08;    // m
  double gravity = 9.81;       // m / s^2

  // Throws kInvalidArgument when an invariant is violated.
  void validate() const;
  // Same checks but allows inertia == 0 (degenerate physics in loss tests).
  void validate_allow_massless() const;

  bool operator==(const WristDynamicsParams&) const = default;
};

struct MomentArms {
  std::vector<double> r;  // m, signed

  static MomentArms wrist_default();
  std::size_t size() const noexcept { return r.size(); }
  void validate(std::size_t expected_count) const;

  bool operator==(const MomentArms&) const = default;
};

struct JointState {
  double theta = 0.0;
  double theta_dot = 0.0;
  double theta_ddot = 0.0;
};

double joint_torque(std::span<const double> forces, const MomentArms& arms);

double gravity_torque(const WristDynamicsParams& p, double theta) noexcept;

double eom_residual(const WristDynamicsParams& p, const JointState& s, double tau) noexcept;

double forward_accel(const WristDynamicsParams& p, double theta, double theta_dot, double tau);

}  // namespace pimtl
