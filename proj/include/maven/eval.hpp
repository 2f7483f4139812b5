// Deployment with frozen networks and online latent inference, trial
// metrics, trajectory export and the benchmark harness.
#pragma once

#include "maven/config.hpp"
#include "maven/env.hpp"
#include "maven/inference.hpp"
#include "maven/nn/checkpoint.hpp"
#include "maven/ppo.hpp"
#include "maven/trainer.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace maven {

/// Networks restored from a checkpoint. Nothing here is ever updated.
class DeployedPolicy {
 public:
  /// Throws std::runtime_error when a tensor is missing or its shape does not
  /// match the architecture described by the embedded config.
  static DeployedPolicy from_checkpoint(const nn::Checkpoint& ckpt);
  static DeployedPolicy load(const std::filesystem::path& path);

  Method method() const { return method_; }
  const Config& config() const { return cfg_; }
  const ActorCritic& policy() const { return ac_; }
  const PredictiveEncoder* encoder() const { return encoder_ ? &*encoder_ : nullptr; }
  int latent_dim() const { return ac_.latent_dim(); }

  /// FNV-1a over every parameter value, in checkpoint order.
  std::uint64_t checksum() const;

 private:
  Method method_ = Method::maven;
  Config cfg_;
  ActorCritic ac_;
  std::optional<PredictiveEncoder> encoder_;
};

/// Deployment-time context: FIFO of transitions with their factors cached
/// so each posterior costs one pass over at most `capacity` factors.
class OnlineContext {
 public:
  OnlineContext(const PredictiveEncoder* encoder, std::size_t capacity = 256);

  void clear();
  void push(const Transition& t);
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  /// Prior N(0, I) when empty.
  LatentPosterior posterior() const;

 private:
  const PredictiveEncoder* encoder_;
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;  // slot for the next push
  nn::Tensor mu_;
  nn::Tensor var_;
};

struct TrajectoryRow {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 w = Vec3::Zero();
  double throttle = 0.0;  // normalized command that produced this state
  Vec3 wc = Vec3::Zero();  // commanded body rates [rad/s]
  Eigen::VectorXd z_mu;  // posterior behind that command (prior on row 0)
  Eigen::VectorXd z_var;
  int waypoint_index = 0;
};

struct Trajectory {
  std::vector<TrajectoryRow> rows;  // rows[0] is the initial state
  int latent_dim = 0;  // 0 when the method has no encoder
  std::size_t waypoint_count = 0;
  TerminationStatus status = TerminationStatus::running;
};

/// Rounds to the 9 significant digits used in exported files, so metrics
/// computed in memory and from a re-imported CSV agree exactly.
double quantize(double x);

struct EpisodeMetrics {
  bool success = false;
  double time = 0.0;  // [s] elapsed until termination
  double avg_velocity = 0.0;  // path length / time [m/s]
  double max_velocity = 0.0;  // [m/s]
  double throttle_high_pct = 0.0;  // % of steps with throttle > 0.8
  int steps = 0;
};

EpisodeMetrics compute_metrics(const Trajectory& traj);

struct EpisodeOptions {
  bool deterministic_latent = false;
  bool deterministic_action = true;
  /// Observes the posterior and latent used for each action.
  std::function<void(int step, const LatentPosterior& post, const Eigen::VectorXd& z)> on_latent;
};

/// Runs one episode on `track` with all parameters frozen. Methods with an
/// encoder start from the prior and infer from every transition seen so far.
Trajectory meta_test_episode(const DeployedPolicy& policy, const TaskSpec& task, const NamedTrack& track,
                             const EpisodeOptions& opts, Rng& rng);

void export_trajectory(const Trajectory& traj, std::ostream& out);
void export_trajectory(const Trajectory& traj, const std::filesystem::path& path);

// Benchmark --------------------------------------------------------------------

struct EvalTask {
  std::string label;
  TaskSpec task;
  bool cycle_rotor = false;  // faulty rotor = track index mod 4
};

/// "mass:0.25,0.5" or "loss:0,0.15,0.3" (nominal mass, rotor cycled over
/// tracks) or "loss@2:0.3" (fixed rotor). Several groups join with ';'.
std::vector<EvalTask> parse_eval_tasks(const std::string& spec, double nominal_mass);

/// switchback: the single built-in course. random_tracks: `n_tracks` courses
/// of 1 + `track_targets` waypoints from the training workspace, fixed by
/// `seed`. named: the listed track files.
std::vector<NamedTrack> benchmark_tracks(const EvalConfig& eval, const EnvConfig& env);

struct TrialResult {
  std::string method;
  std::string task_label;
  std::string track;
  TaskSpec task;
  EpisodeMetrics metrics;
  TerminationStatus status = TerminationStatus::running;
  int waypoints_passed = 0;
};

struct MethodSummary {
  std::string method;
  std::string task_label;
  int trials = 0;
  double success_rate = 0.0;  // [%]
  double mean_time = 0.0;  // over successful trials; NaN if none
};

struct EvalReport {
  std::vector<TrialResult> trials;

  std::vector<MethodSummary> summary() const;
  double success_rate(const std::string& method, const std::string& task_label) const;
  void write_trials_csv(std::ostream& out) const;
  void write_summary_csv(std::ostream& out) const;
};

struct NamedPolicy {
  std::string name;
  const DeployedPolicy* policy = nullptr;
};

/// Every method runs every (task, track) pair with the same per-trial seed.
/// `trajectory_dir`, when non-empty, receives one CSV per trial.
EvalReport run_benchmark(std::span<const NamedPolicy> methods, std::span<const EvalTask> tasks,
                         std::span<const NamedTrack> tracks, const EvalConfig& eval,
                         const std::filesystem::path& trajectory_dir = {});

// Throughput -------------------------------------------------------------------

struct ThroughputSample {
  int envs = 0;
  unsigned threads = 1;
  long env_steps = 0;
  double seconds = 0.0;
  double steps_per_sec = 0.0;
};

/// Steps a training-mode batch of `envs` environments `steps` times with
/// hover-centred random actions drawn up front, so only simulation is timed.
ThroughputSample measure_throughput(const Config& cfg, int envs, int steps, unsigned threads);

}  // namespace maven
