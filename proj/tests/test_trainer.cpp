#include "maven/trainer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

using namespace maven;

namespace {

Config toy_config(const std::string& method) {
  Config cfg;
  cfg.train.method = method;
  cfg.train.scenario = "mass";
  cfg.train.task_masses = {0.25, 0.55};
  cfg.train.envs_per_task = 8;
  cfg.train.rollout_len = 64;
  cfg.train.seed = 11;
  cfg.ppo.hidden = {32, 32};
  cfg.encoder.hidden = {32, 32};
  cfg.encoder.context_batch = 32;
  return cfg;
}

// Mass implied by one transition: commanded collective thrust over the
// specific force along the body z axis.
double implied_mass(const Transition& t, const Config& cfg) {
  const Vec3 v0 = t.o.segment<3>(kObsVel).cwiseProduct(cfg.env.norm.k_v);
  const Vec3 v1 = t.o_next.segment<3>(kObsVel).cwiseProduct(cfg.env.norm.k_v);
  const Vec3 accel = (v1 - v0) / cfg.env.dt + Vec3(0.0, 0.0, kGravity);
  const Vec3 body_z(t.o[kObsRot + 2], t.o[kObsRot + 5], t.o[kObsRot + 8]);
  const double thrust = t.a[0] * 4.0 * cfg.quad.max_rotor_thrust;
  return thrust / accel.dot(body_z);
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(MetaTrainer, RolloutHoldsStepsTimesEnvs) {
  MetaTrainer t(toy_config("maven"));
  EXPECT_EQ(t.envs(), 16);
  t.run_iteration();
  // 2 tasks x 8 envs x 64 steps.
  EXPECT_EQ(t.rollout().steps * t.rollout().envs, 1024);
  EXPECT_EQ(t.rollout().obs.rows(), 1024);
  EXPECT_EQ(t.env_steps(), 1024);
  // Storage is cleared once PPO has consumed it.
  EXPECT_TRUE(t.rollout().empty());
}

TEST(MetaTrainer, EncoderUpdatesEveryThirdStep) {
  MetaTrainer t(toy_config("maven"));
  const IterationLog log = t.run_iteration();
  std::vector<int> expect;
  for (int s = 3; s <= 64; s += 3) expect.push_back(s);
  EXPECT_EQ(t.encoder_update_steps(), expect);
  EXPECT_EQ(log.encoder_updates, static_cast<int>(expect.size()));
}

TEST(MetaTrainer, BaselinesHaveNoEncoder) {
  MetaTrainer t(toy_config("standard_rl"));
  EXPECT_EQ(t.encoder(), nullptr);
  EXPECT_TRUE(t.context_buffers().empty());
  for (const TaskSpec& task : t.tasks()) EXPECT_EQ(task.mass, t.config().train.fixed_mass);
  const IterationLog log = t.run_iteration();
  EXPECT_EQ(log.encoder_updates, 0);
  EXPECT_EQ(t.policy().latent_dim(), t.config().encoder.latent_dim);
}

TEST(MetaTrainer, ContextBuffersOnlyHoldTheirTask) {
  Config cfg = toy_config("maven");
  MetaTrainer t(cfg);
  for (int k = 0; k < 2; ++k) t.run_iteration();
  const auto& buffers = t.context_buffers();
  ASSERT_EQ(buffers.size(), 2u);
  std::vector<double> estimates;
  for (const ContextBuffer& b : buffers) {
    ASSERT_GT(b.size(), 64u);
    std::vector<double> m;
    for (const Transition& tr : b.all()) {
      // Skip near-zero throttle and steps that ended in a collision.
      if (tr.a[0] > 0.15 && std::abs(tr.r) < 5.0) m.push_back(implied_mass(tr, cfg));
    }
    estimates.push_back(median(m));
  }
  // Mixer saturation biases both estimates by a similar factor, so compare
  // the ratio; a buffer fed by the other task would pull it toward 1.
  EXPECT_NEAR(estimates[1] / estimates[0], 0.55 / 0.25, 0.2);
}

TEST(MetaTrainer, DynamicsHeadChecksumConstant) {
  MetaTrainer t(toy_config("maven"));
  const auto start = t.encoder()->dynamics_head_checksum();
  for (int k = 0; k < 3; ++k) EXPECT_EQ(t.run_iteration().dynamics_checksum, start);
}

TEST(MetaTrainer, SameSeedSameLog) {
  const auto run = [] {
    Config cfg = toy_config("maven");
    cfg.train.total_env_steps = 3 * 1024;
    MetaTrainer t(cfg);
    std::ostringstream log;
    t.train(&log, {});
    return log.str();
  };
  const std::string a = run();
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 3);
  EXPECT_EQ(a, run());
}

TEST(MetaTrainer, DifferentSeedDifferentLog) {
  Config a = toy_config("maven"), b = toy_config("maven");
  b.train.seed = 12;
  MetaTrainer ta(a), tb(b);
  EXPECT_NE(ta.run_iteration().to_json(), tb.run_iteration().to_json());
}

TEST(MetaTrainer, StopFlagHaltsBeforeFirstIteration) {
  Config cfg = toy_config("standard_rl");
  MetaTrainer t(cfg);
  std::ostringstream log;
  t.train(&log, {}, [] { return true; });
  EXPECT_EQ(t.iteration(), 0);
  EXPECT_TRUE(log.str().empty());
}

TEST(MetaTrainer, CheckpointCarriesConfigAndAllTensors) {
  MetaTrainer t(toy_config("maven"));
  const nn::Checkpoint ck = t.checkpoint();
  EXPECT_EQ(ck.seed, 11u);
  EXPECT_EQ(ck.config_text, dump_config(t.config()));
  EXPECT_NE(ck.find("policy.log_std"), nullptr);
  EXPECT_NE(ck.find("encoder.f_dyn.0.weight"), nullptr);
  EXPECT_NE(ck.find("encoder.factor.0.weight"), nullptr);
}

TEST(MetaTrainer, UnknownMethodRejected) {
  Config cfg = toy_config("sac");
  EXPECT_THROW(MetaTrainer{cfg}, std::invalid_argument);
}

TEST(MetaTrainer, LogLineIsJson) {
  MetaTrainer t(toy_config("maven"));
  const std::string line = t.run_iteration().to_json();
  EXPECT_EQ(line.front(), '{');
  EXPECT_EQ(line.back(), '}');
  for (const char* key : {"\"iteration\":1", "\"env_steps\":1024", "\"encoder_kl\"", "\"kl_weight\"", "\"pass_rate\""}) {
    EXPECT_NE(line.find(key), std::string::npos) << key;
  }
}
