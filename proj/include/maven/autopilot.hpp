// Rate-loop PID and X-quad motor mixer standing in for the flight controller.
#pragma once

#include "maven/dynamics.hpp"

namespace maven {

struct RateCommand {
  double throttle = 0.0;  // [0, 1]
  Vec3 omega_cmd = Vec3::Zero();  // [rad/s]
};

struct PidGains {
  Vec3 kp = Vec3(0.12, 0.12, 0.8);
  Vec3 ki = Vec3(0.5, 0.5, 1.0);
  Vec3 kd = Vec3(0.001, 0.001, 0.0);
  // Bound on the (ki-scaled) integrator, in normalized torque units.
  double integrator_limit = 0.3;
};

struct PidState {
  PidGains gains;
  Vec3 integrator = Vec3::Zero();
  Vec3 prev_measurement = Vec3::Zero();
  bool has_prev = false;

  void reset() {
    integrator.setZero();
    prev_measurement.setZero();
    has_prev = false;
  }
};

struct PidOutput {
  Vec3 torque_setpoint = Vec3::Zero();  // normalized, each axis in [-1, 1]
  PidState state;
};

/// Per-axis PID on (cmd - measured). The derivative acts on the measurement
/// so setpoint steps do not kick.
PidOutput rate_pid(const Vec3& w_meas, const RateCommand& cmd, const PidState& pid, double dt);

/// u_i = clamp(throttle + signs_i . torque, 0, 1) * u_max.
RotorThrusts motor_mix(double throttle, const Vec3& torque_setpoint, const QuadrotorParams& params);

struct AutopilotOutput {
  RotorThrusts thrusts;
  PidState pid;
};

/// rate_pid -> motor_mix -> apply_fault.
AutopilotOutput autopilot_step(const RateCommand& cmd, const QuadrotorState& state,
                               const PidState& pid, const FaultSpec& fault,
                               const QuadrotorParams& params, double dt);

}  // namespace maven
