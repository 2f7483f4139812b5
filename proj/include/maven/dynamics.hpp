// Quadrotor rigid-body dynamics with rotor mixing and single-rotor faults.
#pragma once

#include <Eigen/Dense>

#include <span>

namespace maven {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kGravity = 9.81;

struct QuadrotorState {
  Vec3 p = Vec3::Zero();  // world position [m]
  Vec3 v = Vec3::Zero();  // world velocity [m/s]
  Mat3 R = Mat3::Identity();  // body -> world
  Vec3 w = Vec3::Zero();  // body rates [rad/s]

  bool finite() const {
    return p.allFinite() && v.allFinite() && R.allFinite() && w.allFinite();
  }
};

struct QuadrotorParams {
  double mass = 0.33;  // [kg]
  Mat3 inertia = Vec3(2.5e-3, 2.5e-3, 4.3e-3).asDiagonal();  // [kg m^2]
  double arm_length = 0.10;  // [m]
  double drag_coeff = 0.01;  // yaw moment per unit thrust [m]
  double max_rotor_thrust = 3.5 * 0.33 * kGravity / 4.0;  // [N]
  Vec3 gravity = Vec3(0.0, 0.0, -kGravity);

  // Thrust to weight 3.5 at the nominal 330 g airframe.
  static double nominal_max_rotor_thrust() { return 3.5 * 0.33 * kGravity / 4.0; }

  bool valid() const;
};

struct RotorThrusts {
  Vec4 u = Vec4::Zero();  // [N]
};

// Body-frame collective thrust along +z and body torque. The x/y force
// components are identically zero, so only the z magnitude is stored.
struct Wrench {
  double thrust = 0.0;  // [N]
  Vec3 torque = Vec3::Zero();  // [N m]

  Vec3 force() const { return Vec3(0.0, 0.0, thrust); }
};

// Fraction of u_max lost per rotor.
struct FaultSpec {
  Vec4 loss_factor = Vec4::Zero();

  bool any() const { return (loss_factor.array() != 0.0).any(); }
  static FaultSpec single(int rotor, double loss) {
    FaultSpec f;
    f.loss_factor[rotor] = loss;
    return f;
  }
};

/// X-configuration mapping. Rotor i contributes sign(i) * l/sqrt(2) to roll
/// and pitch and sign(i) * c_tau to yaw; see kMixerSigns.
Wrench mix_rotor_thrusts(const RotorThrusts& thrusts, const QuadrotorParams& params);

/// Sign pattern of each rotor on (roll, pitch, yaw), shared with the motor mixer.
const Eigen::Matrix<double, 4, 3>& mixer_signs();

/// Clamp each rotor to its faulted ceiling (1 - loss_i) * u_max.
RotorThrusts apply_fault(const RotorThrusts& commanded, const FaultSpec& fault,
                         const QuadrotorParams& params);

/// Rotation exp(hat(phi)) via Rodrigues' formula.
Mat3 so3_exp(const Vec3& phi);
Mat3 hat(const Vec3& v);

struct DynamicsStep {
  QuadrotorState state;
  bool finite = true;  // false means the caller must end the episode
};

/// One fixed step with the wrench held constant. Body rates and velocity are
/// advanced first; position uses the mean of old and new velocity (exact for
/// a held wrench) and attitude is composed with exp(hat(w_new) * dt).
DynamicsStep step_dynamics(const QuadrotorState& state, const Wrench& wrench,
                           const QuadrotorParams& params, double dt);

/// Elementwise step_dynamics. Throws std::invalid_argument on length mismatch.
/// `threads` > 1 splits the batch into contiguous chunks; results do not
/// depend on the thread count.
void step_batch(std::span<const QuadrotorState> states, std::span<const Wrench> wrenches,
                std::span<const QuadrotorParams> params, double dt,
                std::span<DynamicsStep> out, unsigned threads = 1);

}  // namespace maven
