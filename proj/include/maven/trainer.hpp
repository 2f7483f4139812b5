// Meta-training orchestrator: all tasks step concurrently in one batch
// environment, the context encoder trains every few steps on per-task
// buffers, and PPO updates the latent-conditioned policy once per rollout.
// The same loop trains the baselines with the latent channel zeroed.
#pragma once

#include "maven/config.hpp"
#include "maven/env.hpp"
#include "maven/inference.hpp"
#include "maven/nn/checkpoint.hpp"
#include "maven/ppo.hpp"

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace maven {

enum class Method { maven, standard_rl, rl_dr, critic_encoder_ablation };

Method method_from_string(const std::string& name);
std::string to_string(Method m);
/// Methods with a context encoder.
bool uses_encoder(Method m);

struct IterationLog {
  long iteration = 0;
  long env_steps = 0;
  double mean_reward = 0.0;  // raw per-step reward
  long episodes = 0;
  double mean_episode_return = 0.0;
  double mean_episode_length = 0.0;
  double collision_rate = 0.0;  // of finished episodes
  long waypoints_passed = 0;
  double pass_rate = 0.0;  // passed / (passed + collisions)
  PpoStats ppo;
  EncoderLossTerms encoder;  // averaged over this iteration's updates
  int encoder_updates = 0;
  std::vector<double> task_kl;  // KL of each task's latest posterior
  std::uint64_t dynamics_checksum = 0;

  /// One JSON object, no trailing newline.
  std::string to_json() const;
};

/// Tasks that occupy the batch environment's slots, one per task group.
std::vector<TaskSpec> training_tasks(const Config& cfg, Method method, Rng& rng);

class MetaTrainer {
 public:
  explicit MetaTrainer(const Config& cfg);

  Method method() const { return method_; }
  const Config& config() const { return cfg_; }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  int envs() const { return static_cast<int>(env_->size()); }
  long env_steps() const { return env_steps_; }
  long iteration() const { return iteration_; }

  /// One rollout of `rollout_len` steps over every environment, the encoder
  /// updates interleaved with it, then GAE and the PPO epochs.
  IterationLog run_iteration();

  /// Iterates until `total_env_steps`, writing one log line per iteration to
  /// `log` and periodic checkpoints to `checkpoint_path` (if non-empty).
  /// `stop` is polled between iterations; a final checkpoint is written on
  /// exit either way.
  void train(std::ostream* log, const std::filesystem::path& checkpoint_path,
             const std::function<bool()>& stop = nullptr);

  nn::Checkpoint checkpoint() const;

  ActorCritic& policy() { return ac_; }
  PredictiveEncoder* encoder() { return encoder_ ? encoder_.get() : nullptr; }
  const std::vector<ContextBuffer>& context_buffers() const { return buffers_; }
  const RolloutBatch& rollout() const { return batch_; }
  /// Rollout-step indices (1-based) at which the encoder updated last iteration.
  const std::vector<int>& encoder_update_steps() const { return encoder_update_steps_; }

 private:
  void resample_latents();
  EncoderLossTerms encoder_update();
  std::vector<TaskContext> sample_contexts();
  std::pair<nn::Var, nn::Var> critic_encoder_hook(nn::Graph& g, std::span<const std::size_t> rows);

  Config cfg_;
  Method method_;
  std::vector<TaskSpec> tasks_;
  int envs_per_task_ = 0;
  std::unique_ptr<BatchEnv> env_;
  std::unique_ptr<PredictiveEncoder> encoder_;
  std::vector<ContextBuffer> buffers_;
  ActorCritic ac_;
  std::unique_ptr<PpoTrainer> ppo_;
  RolloutBatch batch_;
  nn::Tensor z_;  // E x D current latents

  Rng action_rng_;
  Rng context_rng_;
  Rng latent_rng_;
  Rng noise_rng_;
  Rng ppo_rng_;

  long env_steps_ = 0;
  long iteration_ = 0;
  std::vector<double> episode_return_;
  std::vector<int> encoder_update_steps_;
  std::vector<double> task_kl_;
};

}  // namespace maven
