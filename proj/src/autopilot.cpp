#include "maven/autopilot.hpp"

#include <algorithm>

namespace maven {

PidOutput rate_pid(const Vec3& w_meas, const RateCommand& cmd, const PidState& pid, double dt) {
  PidOutput out;
  out.state = pid;
  const PidGains& g = pid.gains;
  const Vec3 error = cmd.omega_cmd - w_meas;

  const double lim = g.integrator_limit;
  out.state.integrator =
      (pid.integrator + (g.ki.array() * error.array() * dt).matrix()).cwiseMax(-lim).cwiseMin(lim);

  Vec3 derivative = Vec3::Zero();
  if (pid.has_prev) derivative = -(w_meas - pid.prev_measurement) / dt;
  out.state.prev_measurement = w_meas;
  out.state.has_prev = true;

  const Vec3 raw = g.kp.cwiseProduct(error) + out.state.integrator + g.kd.cwiseProduct(derivative);
  out.torque_setpoint = raw.cwiseMax(-1.0).cwiseMin(1.0);
  return out;
}

RotorThrusts motor_mix(double throttle, const Vec3& torque_setpoint, const QuadrotorParams& params) {
  RotorThrusts out;
  const Vec4 mixed = Vec4::Constant(throttle) + mixer_signs() * torque_setpoint;
  out.u = mixed.cwiseMax(0.0).cwiseMin(1.0) * params.max_rotor_thrust;
  return out;
}

AutopilotOutput autopilot_step(const RateCommand& cmd, const QuadrotorState& state,
                               const PidState& pid, const FaultSpec& fault,
                               const QuadrotorParams& params, double dt) {
  const PidOutput loop = rate_pid(state.w, cmd, pid, dt);
  const RotorThrusts mixed = motor_mix(cmd.throttle, loop.torque_setpoint, params);
  return {apply_fault(mixed, fault, params), loop.state};
}

}  // namespace maven
