#include "maven/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace maven {

using nn::Graph;
using nn::Tensor;
using nn::Var;

double throttle_to_pre_tanh(double throttle) {
  const double x = std::clamp(2.0 * throttle - 1.0, -0.999, 0.999);
  return std::atanh(x);
}

ActionVec to_env_action(const Eigen::Ref<const Eigen::RowVectorXd>& draw) {
  ActionVec a;
  a.a[0] = 0.5 * (std::clamp(draw[0], -1.0, 1.0) + 1.0);
  for (int j = 1; j < kActDim; ++j) a.a[j] = std::clamp(draw[j], -1.0, 1.0);
  return a;
}

ActorCritic::ActorCritic(int latent_dim, const PpoConfig& cfg, double hover_throttle, Rng& init_rng)
    : latent_dim_(latent_dim) {
  std::vector<int> aw{kObsDim + latent_dim};
  aw.insert(aw.end(), cfg.hidden.begin(), cfg.hidden.end());
  std::vector<int> cw = aw;
  aw.push_back(kActDim);
  cw.push_back(1);
  actor_ = nn::Mlp("policy.actor", {aw, nn::Activation::relu, nn::Activation::tanh});
  critic_ = nn::Mlp("policy.critic", {cw, nn::Activation::relu, nn::Activation::identity});
  actor_.init_orthogonal(init_rng, std::sqrt(2.0), 0.01);
  critic_.init_orthogonal(init_rng, std::sqrt(2.0), 1.0);
  actor_.bias(actor_.layers() - 1).value(0, 0) = throttle_to_pre_tanh(hover_throttle);
  head_ = nn::GaussianHead("policy.log_std", kActDim, cfg.init_log_std);
}

Tensor ActorCritic::join(const Tensor& obs, const Tensor& z) {
  Tensor x(obs.rows(), obs.cols() + z.cols());
  x << obs, z;
  return x;
}

Tensor ActorCritic::mean(const Tensor& input) const { return actor_.forward(input); }
Tensor ActorCritic::value(const Tensor& input) const { return critic_.forward(input); }
Var ActorCritic::mean(Graph& g, const Var& input) { return actor_.forward(g, input); }
Var ActorCritic::value(Graph& g, const Var& input) { return critic_.forward(g, input); }

std::vector<nn::Parameter*> ActorCritic::actor_parameters() {
  std::vector<nn::Parameter*> out = actor_.parameters();
  out.push_back(&head_.log_std);
  return out;
}

std::vector<nn::Parameter*> ActorCritic::critic_parameters() { return critic_.parameters(); }

std::vector<const nn::Parameter*> ActorCritic::all_parameters() const {
  std::vector<const nn::Parameter*> out = actor_.parameters();
  out.push_back(&head_.log_std);
  for (const nn::Parameter* p : critic_.parameters()) out.push_back(p);
  return out;
}

void RolloutBatch::allocate(int t, int e, int latent_dim) {
  steps = t;
  envs = e;
  const auto n = static_cast<Eigen::Index>(t) * e;
  obs.resize(n, kObsDim);
  z.resize(n, latent_dim);
  draw.resize(n, kActDim);
  const auto un = static_cast<std::size_t>(n);
  logp.assign(un, 0.0);
  reward.assign(un, 0.0);
  value.assign(un, 0.0);
  done.assign(un, 0);
  last_value.assign(static_cast<std::size_t>(e), 0.0);
  advantage.assign(un, 0.0);
  ret.assign(un, 0.0);
}

void RolloutBatch::clear() {
  logp.clear();
  reward.clear();
  value.clear();
  done.clear();
  advantage.clear();
  ret.clear();
}

void compute_gae(std::span<const double> reward, std::span<const double> value, std::span<const std::uint8_t> done,
                 std::span<const double> last_value, int steps, int envs, double gamma, double lam,
                 std::vector<double>& advantage, std::vector<double>& ret) {
  const auto n = static_cast<std::size_t>(steps) * static_cast<std::size_t>(envs);
  if (reward.size() != n || value.size() != n || done.size() != n ||
      last_value.size() != static_cast<std::size_t>(envs)) {
    throw std::invalid_argument("compute_gae: size mismatch");
  }
  advantage.assign(n, 0.0);
  ret.assign(n, 0.0);
  for (int e = 0; e < envs; ++e) {
    double running = 0.0;
    for (int t = steps - 1; t >= 0; --t) {
      const std::size_t i = static_cast<std::size_t>(t) * envs + e;
      const double next_v = t == steps - 1 ? last_value[e] : value[i + envs];
      const double keep = done[i] ? 0.0 : 1.0;
      const double delta = reward[i] + gamma * next_v * keep - value[i];
      running = delta + gamma * lam * keep * running;
      advantage[i] = running;
      ret[i] = running + value[i];
    }
  }
}

void compute_gae(RolloutBatch& b, double gamma, double lam) {
  compute_gae(b.reward, b.value, b.done, b.last_value, b.steps, b.envs, gamma, lam, b.advantage, b.ret);
}

void normalize_advantages_per_task(RolloutBatch& b) {
  std::map<int, std::vector<int>> groups;
  for (int e = 0; e < b.envs; ++e) {
    const int task = b.task_of_env.empty() ? 0 : b.task_of_env[e];
    groups[task].push_back(e);
  }
  for (const auto& [task, envs] : groups) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (int t = 0; t < b.steps; ++t) {
      for (int e : envs) {
        const double a = b.advantage[b.index(t, e)];
        sum += a;
        sq += a * a;
        ++count;
      }
    }
    const double m = sum / static_cast<double>(count);
    const double var = std::max(sq / static_cast<double>(count) - m * m, 0.0);
    const double inv = 1.0 / (std::sqrt(var) + 1e-8);
    for (int t = 0; t < b.steps; ++t) {
      for (int e : envs) {
        double& a = b.advantage[b.index(t, e)];
        a = (a - m) * inv;
      }
    }
  }
}

PpoLossOutput ppo_losses(Graph& g, ActorCritic& ac, const Tensor& input, const Var& critic_input,
                         const Tensor& draw, std::span<const double> old_logp, std::span<const double> adv,
                         std::span<const double> ret, const PpoConfig& cfg) {
  const auto m = input.rows();
  auto column = [m](std::span<const double> v) {
    Tensor t(m, 1);
    for (Eigen::Index i = 0; i < m; ++i) t(i, 0) = v[static_cast<std::size_t>(i)];
    return t;
  };

  PpoLossOutput out;
  const Var mu = ac.mean(g, g.constant(input));
  const Var log_std = nn::log_std_var(g, ac.head());
  const Var logp = nn::gaussian_log_prob(mu, log_std, draw);
  const Var log_ratio = logp - g.constant(column(old_logp));
  const Var ratio = exp(log_ratio);
  const Var a = g.constant(column(adv));
  const Var unclipped = ratio * a;
  const Var clipped = clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a;
  const Var surrogate = nn::mean(minimum(unclipped, clipped));
  const Var entropy = nn::gaussian_entropy(log_std);
  out.actor_loss = -surrogate - scale(entropy, cfg.entropy_coef);

  const Var v = ac.value(g, critic_input);
  const Var mse = nn::mean(square(v - g.constant(column(ret))));
  out.critic_loss = scale(mse, cfg.value_coef);

  out.surrogate = surrogate.item();
  out.entropy = entropy.item();
  out.value_mse = mse.item();
  const auto& lr = log_ratio.value();
  const auto& r = ratio.value();
  out.approx_kl = ((r.array() - 1.0) - lr.array()).mean();
  out.clip_fraction = ((r.array() - 1.0).abs() > cfg.clip_eps).cast<double>().mean();
  return out;
}

PpoTrainer::PpoTrainer(ActorCritic& ac, const PpoConfig& cfg) : ac_(&ac), cfg_(cfg) {
  nn::AdamConfig a;
  a.lr = cfg.actor_lr;
  a.max_grad_norm = cfg.max_grad_norm;
  actor_opt_ = nn::Adam(ac.actor_parameters(), a);
  nn::AdamConfig c;
  c.lr = cfg.critic_lr;
  c.max_grad_norm = cfg.max_grad_norm;
  critic_opt_ = nn::Adam(ac.critic_parameters(), c);
}

PpoStats PpoTrainer::update(RolloutBatch& batch, Rng& rng, const CriticInputHook& hook, nn::Adam* extra_optimizer) {
  PpoStats stats;
  const std::size_t n = batch.size();
  if (n == 0) return stats;
  const int latent = static_cast<int>(batch.z.cols());
  const std::size_t parts = static_cast<std::size_t>(std::max(1, cfg_.minibatches));
  const std::size_t mb = (n + parts - 1) / parts;

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t len = std::min(mb, n - start);
      const std::span<const std::size_t> rows(perm.data() + start, len);
      const auto m = static_cast<Eigen::Index>(len);

      Tensor input(m, kObsDim + latent), draw(m, kActDim);
      std::vector<double> old_logp(len), adv(len), ret(len);
      for (std::size_t k = 0; k < len; ++k) {
        const auto i = static_cast<Eigen::Index>(rows[k]);
        const auto r = static_cast<Eigen::Index>(k);
        input.block(r, 0, 1, kObsDim) = batch.obs.row(i);
        input.block(r, kObsDim, 1, latent) = batch.z.row(i);
        draw.row(r) = batch.draw.row(i);
        old_logp[k] = batch.logp[rows[k]];
        adv[k] = batch.advantage[rows[k]];
        ret[k] = batch.ret[rows[k]];
      }

      Graph g;
      Var critic_input, extra;
      if (hook) {
        std::tie(critic_input, extra) = hook(g, rows);
      } else {
        critic_input = g.constant(input);
      }
      const PpoLossOutput out = ppo_losses(g, *ac_, input, critic_input, draw, old_logp, adv, ret, cfg_);
      Var total = out.actor_loss + out.critic_loss;
      if (extra.valid()) total = total + extra;
      if (!std::isfinite(total.item())) {
        std::ostringstream msg;
        msg << "ppo_update: non-finite loss at epoch " << epoch << " (surrogate " << out.surrogate
            << ", value_mse " << out.value_mse << ", entropy " << out.entropy << ", approx_kl " << out.approx_kl
            << (extra.valid() ? ", extra " + std::to_string(extra.item()) : std::string()) << ")";
        throw std::runtime_error(msg.str());
      }

      actor_opt_.zero_grad();
      critic_opt_.zero_grad();
      if (extra_optimizer != nullptr) extra_optimizer->zero_grad();
      g.backward(total);
      actor_opt_.step();
      critic_opt_.step();
      if (extra_optimizer != nullptr) extra_optimizer->step();

      stats.policy_loss += -out.surrogate;
      stats.value_loss += out.value_mse;
      stats.entropy += out.entropy;
      stats.approx_kl += out.approx_kl;
      stats.clip_fraction += out.clip_fraction;
      stats.actor_grad_norm += actor_opt_.last_grad_norm();
      stats.critic_grad_norm += critic_opt_.last_grad_norm();
      ++stats.minibatches;
    }
  }
  const double k = static_cast<double>(std::max(1, stats.minibatches));
  stats.policy_loss /= k;
  stats.value_loss /= k;
  stats.entropy /= k;
  stats.approx_kl /= k;
  stats.clip_fraction /= k;
  stats.actor_grad_norm /= k;
  stats.critic_grad_norm /= k;
  batch.clear();
  return stats;
}

}  // namespace maven
