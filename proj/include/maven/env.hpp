// Waypoint-traversal environment: observations, actions, reward, waypoint
// progression, termination and a batch environment over autopilot + dynamics.
#pragma once

#include "maven/autopilot.hpp"
#include "maven/dynamics.hpp"
#include "maven/rng.hpp"
#include "maven/track.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace maven {

inline constexpr int kObservedWaypoints = 2;
inline constexpr int kActDim = 4;
inline constexpr int kObsDim = 3 + 9 + 3 * kObservedWaypoints + kActDim;  // 22

// Observation layout offsets.
inline constexpr int kObsVel = 0;
inline constexpr int kObsRot = 3;
inline constexpr int kObsWaypoints = 12;
inline constexpr int kObsPrevAction = 18;

using Observation = Eigen::Matrix<double, kObsDim, 1>;

// Env-space action: throttle in [0, 1], normalized rates in [-1, 1].
struct ActionVec {
  Vec4 a = Vec4::Zero();

  double throttle() const { return a[0]; }
  Vec3 rates() const { return a.tail<3>(); }

  static ActionVec hover(double throttle) {
    ActionVec out;
    out.a[0] = throttle;
    return out;
  }
  ActionVec clamped() const {
    ActionVec out;
    out.a[0] = std::clamp(a[0], 0.0, 1.0);
    out.a.tail<3>() = a.tail<3>().cwiseMax(-1.0).cwiseMin(1.0);
    return out;
  }
};

struct NormalizationConfig {
  Vec3 k_p = Vec3(6.0, 6.0, 1.0);  // [m]
  Vec3 k_v = Vec3(15.0, 15.0, 10.0);  // [m/s]
  Vec3 omega_max = Vec3(12.0, 12.0, 5.0);  // [rad/s]
};

struct RewardConfig {
  double lambda_progress = 10.0;
  double lambda_smooth = 1e-4;
  double lambda_safety = 10.0;
  double collision_penalty = 1.0;
};

struct EnvConfig {
  double dt = 0.01;
  int max_episode_len = 1000;
  Box waypoint_box{Vec3(-3.0, -3.0, 0.5), Vec3(3.0, 3.0, 1.5)};
  Box flight_box{Vec3(-6.0, -6.0, 0.1), Vec3(6.0, 6.0, 3.0)};
  double accept_radius = 1.0;
  double obs_clip = 5.0;
  double nominal_mass = 0.33;
  NormalizationConfig norm;
  RewardConfig reward;
};

struct TaskSpec {
  double mass = 0.33;
  FaultSpec fault;
  int id = 0;
};

enum class TrackMode { training, evaluation };

enum class TerminationStatus { running, collision, success, timeout };

const char* to_string(TerminationStatus status);

struct EnvState {
  QuadrotorState quad;
  Track track;
  PidState pid;
  ActionVec a_prev;
  int t = 0;
  TaskSpec task;
};

struct RewardTerms {
  double total = 0.0;
  double progress = 0.0;  // unweighted
  double smooth = 0.0;
  double safety = 0.0;
};

/// Throttle that balances the nominal airframe's weight. Episodes start with
/// this as the previous action regardless of the task's true mass.
double nominal_hover_throttle(const EnvConfig& cfg, const QuadrotorParams& base);

QuadrotorParams task_params(const QuadrotorParams& base, const TaskSpec& task);

Observation build_observation(const EnvState& env, const NormalizationConfig& norm,
                              double obs_clip = 5.0);

RateCommand denormalize_action(const ActionVec& a, const NormalizationConfig& norm);

/// Progress is measured against `prev_env`'s immediate waypoint, before any
/// cursor update of this step.
RewardTerms compute_reward(const EnvState& prev_env, const EnvState& env, const ActionVec& a,
                           const RewardConfig& cfg, bool collision);

struct WaypointUpdate {
  Track track;
  bool passed = false;
};

/// Advances at most one waypoint. In training mode a fresh waypoint sampled
/// from `sample_box` is appended on every pass.
WaypointUpdate update_waypoints(Track track, const Vec3& p, Rng& rng, TrackMode mode,
                                const Box& sample_box);

TerminationStatus check_termination(const EnvState& env, const Box& flight_box, TrackMode mode,
                                    int max_episode_len);

struct EnvStepResult {
  Observation obs;
  double reward = 0.0;
  RewardTerms terms;
  TerminationStatus status = TerminationStatus::running;
  EnvState next;
  bool passed = false;
  RotorThrusts thrusts;
};

EnvStepResult env_step(const EnvState& env, const ActionVec& a, const EnvConfig& cfg,
                       const QuadrotorParams& base, Rng& rng, TrackMode mode);

/// Fresh training episode: start and the first W waypoints uniform in the
/// waypoint box, at rest and level.
EnvState reset_training(const TaskSpec& task, const EnvConfig& cfg, const QuadrotorParams& base,
                        const PidGains& gains, Rng& rng);

/// Evaluation episode on a fixed course, starting at rest at its first waypoint.
EnvState reset_on_track(const NamedTrack& track, const TaskSpec& task, const EnvConfig& cfg,
                        const QuadrotorParams& base, const PidGains& gains);

// Task distributions ---------------------------------------------------------

struct TaskDistributionConfig {
  double mass_min = 0.25;
  double mass_max = 0.50;
  int mass_task_count = 16;
  std::vector<double> loss_levels{0.1, 0.2, 0.3, 0.4, 0.5};
  double loss_min = 0.0;
  double loss_max = 0.5;
};

/// "mass": uniform masses with no fault. "thrust_loss": every rotor crossed
/// with every loss level at the nominal mass. Throws std::invalid_argument on
/// an unknown scenario.
std::vector<TaskSpec> sample_tasks(const std::string& scenario, const TaskDistributionConfig& cfg,
                                   double nominal_mass, Rng& rng);

/// One draw from the continuous scenario distribution, used for domain
/// randomization.
TaskSpec sample_random_task(const std::string& scenario, const TaskDistributionConfig& cfg,
                            double nominal_mass, Rng& rng);

// Batch environment ------------------------------------------------------------

struct BatchStep {
  Eigen::Matrix<double, Eigen::Dynamic, kObsDim, Eigen::RowMajor> obs;  // after auto-reset
  Eigen::Matrix<double, Eigen::Dynamic, kObsDim, Eigen::RowMajor> final_obs;  // before reset
  std::vector<double> reward;
  std::vector<TerminationStatus> status;
  std::vector<RewardTerms> terms;
  std::vector<int> passed;
  std::vector<int> episode_length;  // length of the episode that just ended, else 0
};

/// Training-mode batch of independent environments. Environment i owns RNG
/// stream i of the master seed and its own task; terminated environments are
/// reset in place on a fresh random track.
class BatchEnv {
 public:
  using TaskResampler = std::function<TaskSpec(std::size_t env_index, Rng& rng)>;

  BatchEnv(std::vector<TaskSpec> tasks, const EnvConfig& cfg, const QuadrotorParams& base,
           const PidGains& gains, std::uint64_t seed, TaskResampler resampler = nullptr);

  std::size_t size() const { return states_.size(); }
  const EnvState& state(std::size_t i) const { return states_[i]; }
  const Observation& observation(std::size_t i) const { return obs_[i]; }
  const EnvConfig& config() const { return cfg_; }

  void reset_all();
  void set_threads(unsigned threads) { threads_ = threads; }

  /// Steps every environment with its action (env space).
  const BatchStep& step(std::span<const ActionVec> actions);

 private:
  void reset_env(std::size_t i);

  EnvConfig cfg_;
  QuadrotorParams base_;
  PidGains gains_;
  TaskResampler resampler_;
  std::vector<TaskSpec> tasks_;
  std::vector<EnvState> states_;
  std::vector<Observation> obs_;
  std::vector<Rng> rngs_;
  BatchStep out_;
  unsigned threads_ = 1;
};

}  // namespace maven
