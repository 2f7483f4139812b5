#include "maven/dynamics.hpp"
#include "maven/rng.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace maven;

namespace {

QuadrotorParams nominal() { return QuadrotorParams{}; }

Wrench hover_wrench(const QuadrotorParams& q) {
  Wrench w;
  w.thrust = q.mass * kGravity;
  return w;
}

QuadrotorState random_state(Rng& rng) {
  QuadrotorState s;
  s.p = Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, 3));
  s.v = Vec3(rng.normal(), rng.normal(), rng.normal());
  s.R = so3_exp(Vec3(rng.normal(), rng.normal(), rng.normal()));
  s.w = Vec3(rng.normal(), rng.normal(), rng.normal());
  return s;
}

bool bit_equal(const QuadrotorState& a, const QuadrotorState& b) {
  return a.p == b.p && a.v == b.v && a.R == b.R && a.w == b.w;
}

}  // namespace

TEST(Mixing, SymmetricHoverHasNoTorque) {
  const QuadrotorParams q = nominal();
  const double h = q.mass * kGravity / 4.0;
  const Wrench w = mix_rotor_thrusts({Vec4::Constant(h)}, q);
  EXPECT_NEAR(w.thrust, q.mass * kGravity, 1e-12);
  EXPECT_EQ(w.torque, Vec3::Zero());
  EXPECT_EQ(w.force().x(), 0.0);
  EXPECT_EQ(w.force().y(), 0.0);
}

TEST(Mixing, FrontPairGivesRollTorque) {
  QuadrotorParams q = nominal();
  q.arm_length = 0.1;
  q.drag_coeff = 0.01;
  const Wrench w = mix_rotor_thrusts({Vec4(1, 1, 0, 0)}, q);
  EXPECT_NEAR(w.torque.x(), 2.0 * 0.1 / std::sqrt(2.0), 1e-12);  // two rotors on the l/sqrt(2) lever
  EXPECT_NEAR(w.torque.x(), 0.141421, 1e-6);
  EXPECT_NEAR(w.torque.y(), 0.0, 1e-15);
  EXPECT_NEAR(w.thrust, 2.0, 1e-15);
}

TEST(Mixing, DiagonalPairGivesYawTorque) {
  QuadrotorParams q = nominal();
  q.drag_coeff = 0.01;
  const Wrench w = mix_rotor_thrusts({Vec4(1, 0, 1, 0)}, q);
  EXPECT_NEAR(w.torque.z(), 0.02, 1e-15);
  EXPECT_NEAR(w.torque.x(), 0.0, 1e-15);
  EXPECT_NEAR(w.torque.y(), 0.0, 1e-15);
}

TEST(Mixing, SignTableMatchesPhysicsMapping) {
  const QuadrotorParams q = nominal();
  const double lever = q.arm_length / std::sqrt(2.0);
  for (int i = 0; i < 4; ++i) {
    Vec4 u = Vec4::Zero();
    u[i] = 1.0;
    const Wrench w = mix_rotor_thrusts({u}, q);
    EXPECT_NEAR(w.torque.x(), lever * mixer_signs()(i, 0), 1e-15);
    EXPECT_NEAR(w.torque.y(), lever * mixer_signs()(i, 1), 1e-15);
    EXPECT_NEAR(w.torque.z(), q.drag_coeff * mixer_signs()(i, 2), 1e-15);
  }
}

TEST(MaxThrust, DerivedFromThrustToWeight) {
  // 3.5 : 1 at 330 g, shared by four rotors.
  EXPECT_NEAR(QuadrotorParams{}.max_rotor_thrust, 3.5 * 0.33 * 9.81 / 4.0, 1e-12);
  EXPECT_NEAR(QuadrotorParams{}.max_rotor_thrust, 2.834, 2e-3);
}

TEST(Fault, ZeroLossIsIdentity) {
  const QuadrotorParams q = nominal();
  const RotorThrusts u{Vec4(0.1, 1.0, 2.0, q.max_rotor_thrust)};
  EXPECT_EQ(apply_fault(u, FaultSpec{}, q).u, u.u);
}

TEST(Fault, HalfLossCapsFirstRotor) {
  const QuadrotorParams q = nominal();
  const RotorThrusts out = apply_fault({Vec4(2.0, 1.0, 1.0, 1.0)}, FaultSpec::single(0, 0.5), q);
  EXPECT_NEAR(out.u[0], 0.5 * 3.5 * 0.33 * 9.81 / 4.0, 1e-12);
  EXPECT_NEAR(out.u[0], 1.417, 1e-3);
  EXPECT_EQ(out.u.tail<3>(), Vec3(1.0, 1.0, 1.0));
}

TEST(Fault, ClampNeverRaisesThrust) {
  const QuadrotorParams q = nominal();
  const RotorThrusts out = apply_fault({Vec4(0.0, 1.0, 1.0, 1.0)}, FaultSpec::single(0, 0.7), q);
  EXPECT_EQ(out.u[0], 0.0);
}

TEST(Fault, Monotone) {
  const QuadrotorParams q = nominal();
  Rng rng(3);
  for (int k = 0; k < 2000; ++k) {
    RotorThrusts u;
    FaultSpec f;
    for (int i = 0; i < 4; ++i) {
      u.u[i] = rng.uniform(0.0, q.max_rotor_thrust);
      f.loss_factor[i] = rng.uniform() < 0.5 ? 0.0 : rng.uniform();
    }
    const RotorThrusts out = apply_fault(u, f, q);
    for (int i = 0; i < 4; ++i) {
      EXPECT_LE(out.u[i], u.u[i]);
      EXPECT_LE(out.u[i], (1.0 - f.loss_factor[i]) * q.max_rotor_thrust);
    }
  }
}

TEST(Step, HoverStaysPut) {
  const QuadrotorParams q = nominal();
  QuadrotorState s;
  s.p = Vec3(0, 0, 1);
  const DynamicsStep out = step_dynamics(s, hover_wrench(q), q, 0.01);
  EXPECT_TRUE(out.finite);
  EXPECT_LT((out.state.p - s.p).norm(), 1e-9);
}

TEST(Step, HoverDriftOverOneSecond) {
  const QuadrotorParams q = nominal();
  QuadrotorState s;
  s.p = Vec3(0, 0, 1);
  const Vec3 start = s.p;
  for (int k = 0; k < 100; ++k) s = step_dynamics(s, hover_wrench(q), q, 0.01).state;
  EXPECT_LT((s.p - start).norm(), 1e-6);
}

TEST(Step, FreeFallMatchesClosedForm) {
  const QuadrotorParams q = nominal();
  QuadrotorState s;
  s.p = Vec3(0, 0, 10);
  for (int k = 0; k < 100; ++k) s = step_dynamics(s, Wrench{}, q, 0.01).state;
  const double drop = 10.0 - s.p.z();
  EXPECT_NEAR(drop, 0.5 * 9.81 * 1.0 * 1.0, 0.05);
  EXPECT_NEAR(drop, 4.905, 0.01 * 4.905);
  EXPECT_NEAR(s.p.x(), 0.0, 1e-15);
}

TEST(Step, PureYawSpinsUpLinearly) {
  const QuadrotorParams q = nominal();
  const double c = 1e-3;
  Wrench w;
  w.torque = Vec3(0, 0, c);
  QuadrotorState s;
  const double dt = 0.01;
  for (int k = 1; k <= 200; ++k) {
    s = step_dynamics(s, w, q, dt).state;
    EXPECT_NEAR(s.w.z(), c / q.inertia(2, 2) * k * dt, 1e-12);
    EXPECT_EQ(s.w.x(), 0.0);
    EXPECT_EQ(s.w.y(), 0.0);
  }
}

TEST(Step, NonFiniteIsReported) {
  const QuadrotorParams q = nominal();
  QuadrotorState s;
  Wrench w;
  w.thrust = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(step_dynamics(s, w, q, 0.01).finite);
}

TEST(Invariant, RotationStaysOrthonormal) {
  const QuadrotorParams q = nominal();
  Rng rng(11);
  QuadrotorState s;
  for (int k = 0; k < 10000; ++k) {
    s.w = Vec3(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    s = step_dynamics(s, Wrench{}, q, 0.01).state;
  }
  EXPECT_LT((s.R.transpose() * s.R - Mat3::Identity()).norm(), 1e-9);
  EXPECT_NEAR(s.R.determinant(), 1.0, 1e-9);
}

TEST(Invariant, IsotropicBodyConservesSpinMagnitude) {
  QuadrotorParams q = nominal();
  q.inertia = Vec3(3e-3, 3e-3, 3e-3).asDiagonal();
  QuadrotorState s;
  s.w = Vec3(3.0, -2.0, 5.0);
  const double w0 = s.w.norm();
  for (int k = 0; k < 1000; ++k) {
    s = step_dynamics(s, Wrench{}, q, 0.01).state;
    ASSERT_NEAR(s.w.norm(), w0, 1e-8);
  }
}

TEST(Invariant, Deterministic) {
  const QuadrotorParams q = nominal();
  Rng a(5), b(5);
  for (int k = 0; k < 100; ++k) {
    const QuadrotorState s = random_state(a);
    const QuadrotorState t = random_state(b);
    Wrench w;
    w.thrust = 4.0;
    w.torque = Vec3(1e-3, -2e-3, 5e-4);
    EXPECT_TRUE(bit_equal(step_dynamics(s, w, q, 0.01).state, step_dynamics(t, w, q, 0.01).state));
  }
}

TEST(Batch, MatchesScalarPathBitForBit) {
  Rng rng(21);
  const std::size_t n = 257;
  std::vector<QuadrotorState> states(n);
  std::vector<Wrench> wrenches(n);
  std::vector<QuadrotorParams> params(n);
  for (std::size_t i = 0; i < n; ++i) {
    states[i] = random_state(rng);
    wrenches[i].thrust = rng.uniform(0, 10);
    wrenches[i].torque = Vec3(rng.normal(), rng.normal(), rng.normal()) * 1e-3;
    params[i].mass = rng.uniform(0.25, 0.5);
  }
  for (unsigned threads : {1u, 3u, 8u}) {
    std::vector<DynamicsStep> out(n);
    step_batch(states, wrenches, params, 0.01, out, threads);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_TRUE(bit_equal(out[i].state, step_dynamics(states[i], wrenches[i], params[i], 0.01).state));
    }
  }
}

TEST(Batch, SingleElement) {
  Rng rng(2);
  const QuadrotorState s = random_state(rng);
  const Wrench w = hover_wrench(nominal());
  const QuadrotorParams q = nominal();
  std::vector<DynamicsStep> out(1);
  step_batch(std::span(&s, 1), std::span(&w, 1), std::span(&q, 1), 0.01, out);
  EXPECT_TRUE(bit_equal(out[0].state, step_dynamics(s, w, q, 0.01).state));
}

TEST(Batch, LargeHoverBatchIsStationary) {
  const QuadrotorParams q = nominal();
  const std::size_t n = 4096;
  std::vector<QuadrotorState> states(n);
  for (auto& s : states) s.p = Vec3(0, 0, 1);
  std::vector<Wrench> wrenches(n, hover_wrench(q));
  std::vector<QuadrotorParams> params(n, q);
  std::vector<DynamicsStep> out(n);
  step_batch(states, wrenches, params, 0.01, out, 4);
  for (const auto& o : out) {
    EXPECT_LT((o.state.p - Vec3(0, 0, 1)).norm(), 1e-9);
    EXPECT_LT(o.state.v.norm(), 1e-9);
  }
}

TEST(Batch, PermutationEquivariance) {
  Rng rng(8);
  const std::size_t n = 64;
  std::vector<QuadrotorState> states(n);
  std::vector<Wrench> wrenches(n);
  std::vector<QuadrotorParams> params(n);
  for (std::size_t i = 0; i < n; ++i) {
    states[i] = random_state(rng);
    wrenches[i].thrust = rng.uniform(0, 10);
    params[i].mass = rng.uniform(0.25, 0.5);
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::vector<QuadrotorState> ps(n);
  std::vector<Wrench> pw(n);
  std::vector<QuadrotorParams> pp(n);
  for (std::size_t i = 0; i < n; ++i) {
    ps[i] = states[perm[i]];
    pw[i] = wrenches[perm[i]];
    pp[i] = params[perm[i]];
  }
  std::vector<DynamicsStep> out(n), pout(n);
  step_batch(states, wrenches, params, 0.01, out);
  step_batch(ps, pw, pp, 0.01, pout);
  for (std::size_t i = 0; i < n; ++i) EXPECT_TRUE(bit_equal(pout[i].state, out[perm[i]].state));
}

TEST(Batch, LengthMismatchThrows) {
  std::vector<QuadrotorState> states(3);
  std::vector<Wrench> wrenches(2);
  std::vector<QuadrotorParams> params(3);
  std::vector<DynamicsStep> out(3);
  EXPECT_THROW(step_batch(states, wrenches, params, 0.01, out), std::invalid_argument);
}

TEST(So3, ExpOfZeroIsIdentity) {
  EXPECT_EQ(so3_exp(Vec3::Zero()), Mat3::Identity());
  const Mat3 R = so3_exp(Vec3(0, 0, M_PI / 2));
  EXPECT_NEAR((R * Vec3::UnitX() - Vec3::UnitY()).norm(), 0.0, 1e-15);
}
