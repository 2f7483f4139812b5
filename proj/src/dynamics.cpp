#include "maven/dynamics.hpp"

#include "maven/parallel.hpp"

#include <cmath>
#include <stdexcept>

namespace maven {

bool QuadrotorParams::valid() const {
  if (!(mass > 0.0) || !(arm_length > 0.0) || !(max_rotor_thrust > 0.0)) return false;
  if (!inertia.isApprox(inertia.transpose(), 1e-12)) return false;
  Eigen::LLT<Mat3> llt(inertia);
  return llt.info() == Eigen::Success;
}

const Eigen::Matrix<double, 4, 3>& mixer_signs() {
  static const Eigen::Matrix<double, 4, 3> signs = [] {
    Eigen::Matrix<double, 4, 3> m;
    //   roll  pitch  yaw
    m << 1.0, -1.0, 1.0,
         1.0, 1.0, -1.0,
         -1.0, 1.0, 1.0,
         -1.0, -1.0, -1.0;
    return m;
  }();
  return signs;
}

Wrench mix_rotor_thrusts(const RotorThrusts& thrusts, const QuadrotorParams& params) {
  const Vec4& u = thrusts.u;
  const double lever = params.arm_length / std::sqrt(2.0);
  Wrench w;
  w.thrust = u.sum();
  w.torque.x() = lever * (u[0] + u[1] - u[2] - u[3]);
  w.torque.y() = lever * (-u[0] + u[1] + u[2] - u[3]);
  w.torque.z() = params.drag_coeff * (u[0] - u[1] + u[2] - u[3]);
  return w;
}

RotorThrusts apply_fault(const RotorThrusts& commanded, const FaultSpec& fault,
                         const QuadrotorParams& params) {
  RotorThrusts out;
  for (int i = 0; i < 4; ++i) {
    const double ceiling = (1.0 - fault.loss_factor[i]) * params.max_rotor_thrust;
    out.u[i] = std::min(commanded.u[i], ceiling);
  }
  return out;
}

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const Mat3 K = hat(phi);
  double a;
  double b;
  if (theta2 < 1e-12) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * K + b * (K * K);
}

DynamicsStep step_dynamics(const QuadrotorState& state, const Wrench& wrench,
                           const QuadrotorParams& params, double dt) {
  DynamicsStep out;
  QuadrotorState& next = out.state;

  const Vec3 Jw = params.inertia * state.w;
  const Vec3 w_dot = params.inertia.ldlt().solve(wrench.torque - state.w.cross(Jw));
  next.w = state.w + dt * w_dot;

  const Vec3 accel = state.R * wrench.force() / params.mass + params.gravity;
  next.v = state.v + dt * accel;
  next.p = state.p + (0.5 * dt) * (state.v + next.v);

  next.R = state.R * so3_exp(next.w * dt);

  out.finite = next.finite();
  return out;
}

void step_batch(std::span<const QuadrotorState> states, std::span<const Wrench> wrenches,
                std::span<const QuadrotorParams> params, double dt,
                std::span<DynamicsStep> out, unsigned threads) {
  const std::size_t n = states.size();
  if (wrenches.size() != n || params.size() != n || out.size() != n) {
    throw std::invalid_argument("step_batch: batch length mismatch");
  }
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = step_dynamics(states[i], wrenches[i], params[i], dt);
    }
  });
}

}  // namespace maven
