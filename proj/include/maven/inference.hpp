// Predictive context encoder: per-task context buffers, product-of-Gaussians
// posterior over the latent task variable, and the encoder loss stack (KL
// bottleneck, position and reward prediction, cross-task specialization).
#pragma once

#include "maven/env.hpp"
#include "maven/nn/adam.hpp"
#include "maven/nn/graph.hpp"
#include "maven/nn/mlp.hpp"
#include "maven/rng.hpp"

#include <Eigen/Dense>

#include <deque>
#include <span>
#include <vector>

namespace maven {

struct Transition {
  Observation o = Observation::Zero();
  Vec4 a = Vec4::Zero();  // env-space action
  double r = 0.0;
  Observation o_next = Observation::Zero();
};

inline constexpr int kTransitionDim = 2 * kObsDim + kActDim + 1;  // 49

/// Fixed-capacity FIFO of transitions for one task.
class ContextBuffer {
 public:
  explicit ContextBuffer(std::size_t capacity = 256, int task_id = 0)
      : capacity_(capacity), task_id_(task_id) {}

  void push(const Transition& t);
  void clear() { data_.clear(); }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }
  int task_id() const { return task_id_; }
  const Transition& operator[](std::size_t i) const { return data_[i]; }  // 0 = oldest

  /// min(n, size) distinct transitions drawn uniformly.
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;
  std::vector<Transition> all() const { return {data_.begin(), data_.end()}; }

 private:
  std::size_t capacity_;
  int task_id_;
  std::deque<Transition> data_;
};

/// Appends a uniformly chosen round(fraction * n) of `batch`, preserving
/// batch order. The buffer evicts its oldest entries beyond capacity.
void buffer_push_subset(ContextBuffer& buffer, std::span<const Transition> batch, double fraction, Rng& rng);

struct LatentPosterior {
  Eigen::VectorXd mu;
  Eigen::VectorXd var;

  static LatentPosterior prior(int dim) {
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
  }
  int dim() const { return static_cast<int>(mu.size()); }
};

/// Closed-form product of diagonal Gaussians: var = 1 / sum(1/var_n),
/// mu = var * sum(mu_n / var_n). Rows of `mu` / `var` are factors.
/// Throws std::invalid_argument when there are no factors.
LatentPosterior aggregate_posterior(const nn::Tensor& mu, const nn::Tensor& var);

/// Reparameterized draw mu + sqrt(var) * xi.
Eigen::VectorXd sample_latent(const LatentPosterior& post, Rng& rng);

/// KL(N(mu, diag var) || N(0, I)).
double kl_to_prior(const LatentPosterior& post);

struct EncoderConfig {
  int latent_dim = 6;
  std::vector<int> hidden{64, 64};
  std::size_t buffer_capacity = 256;
  std::size_t context_batch = 128;  // N
  int update_every = 3;  // N_enc
  int context_per_step = 1;  // transitions pushed per task per env step
  double lr = 1e-3;
  double max_grad_norm = 1.0;

  double w_pos = 1.0;
  double w_rew = 1.0;
  double w_spec = 5e-3;

  double kl_weight_init = 1.0;
  double kl_alpha = 0.05;  // growth rate when KL is above target
  double kl_beta = 0.1;  // decay rate when KL is below target
  double kl_target = 0.0;  // <= 0 means 0.1 * latent_dim
  double kl_weight_min = 1e-4;
  double kl_weight_max = 10.0;

  double eps = 1e-6;
  double spec_min = -5.0;
  double spec_max = 5.0;
  double huber_delta = 1.0;
  double reward_input_scale = 0.1;  // reward channel scaling in the factor input
  std::uint64_t dynamics_head_seed = 0x5eed0f00dull;

  double effective_kl_target() const { return kl_target > 0.0 ? kl_target : 0.1 * latent_dim; }
};

// Graph-side posterior for one context batch.
struct PosteriorVars {
  nn::Var mu;  // 1 x D
  nn::Var var;  // 1 x D
};

struct EncoderLossTerms {
  double total = 0.0;
  double kl = 0.0;  // mean over tasks, unweighted
  double pos = 0.0;
  double rew = 0.0;
  double spec = 0.0;
  double kl_weight = 0.0;  // weight used for this evaluation
  int tasks = 0;
};

/// One task's context batch for an encoder update.
struct TaskContext {
  std::vector<Transition> transitions;
};

/// Factor network q_phi plus the frozen dynamics head and the trainable
/// reward head.
class PredictiveEncoder {
 public:
  PredictiveEncoder() = default;
  PredictiveEncoder(const EncoderConfig& cfg, const NormalizationConfig& norm, Rng& init_rng);

  const EncoderConfig& config() const { return cfg_; }
  int latent_dim() const { return cfg_.latent_dim; }

  /// Per-transition factor inputs, one row per transition.
  nn::Tensor transition_inputs(std::span<const Transition> ts) const;

  struct Factors {
    nn::Tensor mu;  // N x D
    nn::Tensor var;  // N x D, strictly positive
  };
  Factors encode_factors(const nn::Tensor& inputs) const;
  Factors encode_factors(std::span<const Transition> ts) const;
  /// Posterior over all of `ts`; the prior when `ts` is empty.
  LatentPosterior infer(std::span<const Transition> ts) const;

  // Graph versions.
  std::pair<nn::Var, nn::Var> encode_factors(nn::Graph& g, const nn::Tensor& inputs);
  PosteriorVars posterior(nn::Graph& g, std::span<const Transition> ts);

  /// f_dyn(o, a, z): forward only, weights enter as constants.
  nn::Var predict_dynamics(nn::Graph& g, const nn::Tensor& o, const nn::Tensor& a, const nn::Var& z_rows);
  nn::Tensor predict_dynamics(const nn::Tensor& o, const nn::Tensor& a, const nn::Tensor& z_rows) const;
  /// f_rew(o, z).
  nn::Var predict_reward(nn::Graph& g, const nn::Tensor& o, const nn::Var& z_rows);

  /// Builds the full loss graph for one update (per-task KL, position and
  /// reward losses averaged over tasks, plus the cross-task specialization
  /// term), runs backward into the factor net and reward head, and returns
  /// the components. Tasks with no transitions are skipped. `noise` supplies
  /// the reparameterization draws.
  EncoderLossTerms loss_and_backward(std::span<const TaskContext> tasks, double kl_weight, Rng& noise);
  /// Same as above without the backward pass.
  EncoderLossTerms loss(std::span<const TaskContext> tasks, double kl_weight, Rng& noise);

  /// zero_grad, loss_and_backward, one Adam step, then adapt the KL weight.
  EncoderLossTerms update(std::span<const TaskContext> tasks, Rng& noise);

  double kl_weight() const { return kl_weight_; }
  void set_kl_weight(double w) { kl_weight_ = w; }
  /// Target-KL controller: grow by (1 + alpha) above target, shrink by
  /// (1 - beta) below, clamped to [kl_weight_min, kl_weight_max].
  void adapt_kl_weight(double batch_kl);

  nn::Mlp& factor_net() { return factor_net_; }
  nn::Mlp& dynamics_head() { return dynamics_head_; }
  nn::Mlp& reward_head() { return reward_head_; }
  const nn::Mlp& factor_net() const { return factor_net_; }
  const nn::Mlp& dynamics_head() const { return dynamics_head_; }
  const nn::Mlp& reward_head() const { return reward_head_; }

  /// Parameters updated by the encoder optimizer (factor net + reward head).
  std::vector<nn::Parameter*> trainable_parameters();
  std::vector<const nn::Parameter*> all_parameters() const;
  std::uint64_t dynamics_head_checksum() const;
  nn::Adam& optimizer() { return optimizer_; }
  /// Rebinds the optimizer after the object has been moved or copied.
  void reset_optimizer();

 private:
  EncoderLossTerms build_loss(nn::Graph& g, std::span<const TaskContext> tasks, double kl_weight,
                              Rng& noise, nn::Var* total_out);

  EncoderConfig cfg_;
  NormalizationConfig norm_;
  nn::Mlp factor_net_;
  nn::Mlp dynamics_head_;
  nn::Mlp reward_head_;
  nn::Adam optimizer_;
  double kl_weight_ = 1.0;
};

// Loss pieces, exposed for testing.
nn::Var kl_to_prior(const nn::Var& mu, const nn::Var& var);
/// Mean squared error over rows and the three position-bearing channels of
/// the immediate-waypoint offset, in meters.
nn::Var position_loss(const nn::Var& delta_hat, const nn::Tensor& o, const nn::Tensor& o_next,
                      const NormalizationConfig& norm);
nn::Var reward_loss(const nn::Var& r_hat, const nn::Tensor& r, double huber_delta);
/// clamp(-log(mean_d Var_t(z_td) + eps), lo, hi) over the rows (tasks) of z.
nn::Var specialization_loss(const nn::Var& z_means, double eps, double lo, double hi);

}  // namespace maven
