// Latent-conditioned actor-critic, GAE and the clipped-surrogate PPO update.
#pragma once

#include "maven/env.hpp"
#include "maven/nn/adam.hpp"
#include "maven/nn/gaussian.hpp"
#include "maven/nn/graph.hpp"
#include "maven/nn/mlp.hpp"
#include "maven/rng.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace maven {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatches = 4;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double entropy_coef = 1e-3;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  double reward_scale = 0.1;  // applied to rewards before GAE and value regression
  double init_log_std = -1.2;  // std 0.3; wider noise saturates the mixer on yaw and climbs
  std::vector<int> hidden{128, 128};
};

/// Policy input is concat(o, z); baselines feed z = 0.
class ActorCritic {
 public:
  ActorCritic() = default;
  ActorCritic(int latent_dim, const PpoConfig& cfg, double hover_throttle, Rng& init_rng);

  int latent_dim() const { return latent_dim_; }
  int input_dim() const { return kObsDim + latent_dim_; }

  /// Rows of concat(o, z).
  static nn::Tensor join(const nn::Tensor& obs, const nn::Tensor& z);

  /// tanh-squashed action means, B x 4.
  nn::Tensor mean(const nn::Tensor& input) const;
  /// B x 1 state values.
  nn::Tensor value(const nn::Tensor& input) const;

  nn::Var mean(nn::Graph& g, const nn::Var& input);
  nn::Var value(nn::Graph& g, const nn::Var& input);

  nn::Mlp& actor() { return actor_; }
  nn::Mlp& critic() { return critic_; }
  nn::GaussianHead& head() { return head_; }
  const nn::Mlp& actor() const { return actor_; }
  const nn::Mlp& critic() const { return critic_; }
  const nn::GaussianHead& head() const { return head_; }

  std::vector<nn::Parameter*> actor_parameters();  // includes log_std
  std::vector<nn::Parameter*> critic_parameters();
  std::vector<const nn::Parameter*> all_parameters() const;

 private:
  int latent_dim_ = 0;
  nn::Mlp actor_;
  nn::Mlp critic_;
  nn::GaussianHead head_;
};

/// Maps a raw policy draw to the environment action: clamp to [-1, 1], then
/// throttle (x + 1) / 2.
ActionVec to_env_action(const Eigen::Ref<const Eigen::RowVectorXd>& draw);

/// Inverse of the throttle mapping on the mean path, used to center the
/// initial policy on hover.
double throttle_to_pre_tanh(double throttle);

/// On-policy storage laid out step-major: row t * envs + e.
struct RolloutBatch {
  int steps = 0;
  int envs = 0;
  nn::Tensor obs;  // (T*E) x obs_dim
  nn::Tensor z;  // (T*E) x D
  nn::Tensor draw;  // (T*E) x 4, raw pre-clamp draws
  std::vector<double> logp;
  std::vector<double> reward;  // scaled, with truncation bootstrap folded in
  std::vector<double> value;
  std::vector<std::uint8_t> done;  // episode ended after this step
  std::vector<double> last_value;  // E, V of the observation after the last step
  std::vector<int> task_of_env;  // E
  std::vector<double> advantage;
  std::vector<double> ret;

  void allocate(int steps, int envs, int latent_dim);
  void clear();
  std::size_t size() const { return logp.size(); }
  bool empty() const { return logp.empty(); }
  std::size_t index(int t, int e) const { return static_cast<std::size_t>(t) * static_cast<std::size_t>(envs) + static_cast<std::size_t>(e); }
};

/// GAE(lambda) over step-major arrays. `done[t*E+e]` cuts the recursion;
/// `last_value` bootstraps the final step of unfinished episodes.
void compute_gae(std::span<const double> reward, std::span<const double> value, std::span<const std::uint8_t> done,
                 std::span<const double> last_value, int steps, int envs, double gamma, double lam,
                 std::vector<double>& advantage, std::vector<double>& ret);
void compute_gae(RolloutBatch& batch, double gamma, double lam);

/// Normalizes advantages to zero mean and unit variance within each task's
/// environments.
void normalize_advantages_per_task(RolloutBatch& batch);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double actor_grad_norm = 0.0;
  double critic_grad_norm = 0.0;
  int minibatches = 0;
};

struct PpoLossOutput {
  nn::Var actor_loss;  // -surrogate - entropy_coef * entropy
  nn::Var critic_loss;  // value_coef * MSE
  double surrogate = 0.0;
  double entropy = 0.0;
  double value_mse = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

/// Loss graph for one minibatch. `critic_input` may differ from the actor's
/// input when z carries encoder gradients (critic-driven ablation).
PpoLossOutput ppo_losses(nn::Graph& g, ActorCritic& ac, const nn::Tensor& input, const nn::Var& critic_input,
                         const nn::Tensor& draw, std::span<const double> old_logp, std::span<const double> adv,
                         std::span<const double> ret, const PpoConfig& cfg);

/// Called per minibatch to build the critic input when the encoder is trained
/// through the critic; returns the extra loss (KL term) to add, or an invalid
/// Var.
using CriticInputHook =
    std::function<std::pair<nn::Var, nn::Var>(nn::Graph& g, std::span<const std::size_t> rows)>;

class PpoTrainer {
 public:
  PpoTrainer() = default;
  PpoTrainer(ActorCritic& ac, const PpoConfig& cfg);

  /// Runs the configured epochs over the batch. Throws std::runtime_error
  /// with a diagnostic if any loss is non-finite.
  PpoStats update(RolloutBatch& batch, Rng& rng, const CriticInputHook& hook = nullptr,
                  nn::Adam* extra_optimizer = nullptr);

  nn::Adam& actor_optimizer() { return actor_opt_; }
  nn::Adam& critic_optimizer() { return critic_opt_; }

 private:
  ActorCritic* ac_ = nullptr;
  PpoConfig cfg_;
  nn::Adam actor_opt_;
  nn::Adam critic_opt_;
};

}  // namespace maven
