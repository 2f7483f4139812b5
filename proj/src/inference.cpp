#include "maven/inference.hpp"

#include "maven/nn/checkpoint.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace maven {

using nn::Graph;
using nn::Tensor;
using nn::Var;

void ContextBuffer::push(const Transition& t) {
  if (capacity_ == 0) return;
  if (data_.size() == capacity_) data_.pop_front();
  data_.push_back(t);
}

std::vector<Transition> ContextBuffer::sample(std::size_t n, Rng& rng) const {
  const std::size_t m = std::min(n, data_.size());
  std::vector<std::size_t> idx(data_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<Transition> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(data_[idx[i]]);
  return out;
}

void buffer_push_subset(ContextBuffer& buffer, std::span<const Transition> batch, double fraction, Rng& rng) {
  if (fraction < 0.0 || fraction > 1.0) throw std::invalid_argument("buffer_push_subset: fraction outside [0, 1]");
  const std::size_t n = batch.size();
  const auto k = std::min(n, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.index(n - i);
    std::swap(idx[i], idx[j]);
  }
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t i = 0; i < k; ++i) buffer.push(batch[idx[i]]);
}

LatentPosterior aggregate_posterior(const Tensor& mu, const Tensor& var) {
  if (mu.rows() == 0) throw std::invalid_argument("aggregate_posterior: no factors");
  if (mu.rows() != var.rows() || mu.cols() != var.cols()) {
    throw std::invalid_argument("aggregate_posterior: shape mismatch");
  }
  const Tensor prec = var.cwiseInverse();
  const Eigen::RowVectorXd prec_sum = prec.colwise().sum();
  const Eigen::RowVectorXd weighted = prec.cwiseProduct(mu).colwise().sum();
  LatentPosterior post;
  post.var = prec_sum.cwiseInverse().transpose();
  post.mu = post.var.cwiseProduct(weighted.transpose());
  return post;
}

Eigen::VectorXd sample_latent(const LatentPosterior& post, Rng& rng) {
  Eigen::VectorXd z(post.dim());
  for (int d = 0; d < post.dim(); ++d) z[d] = post.mu[d] + std::sqrt(post.var[d]) * rng.normal();
  return z;
}

double kl_to_prior(const LatentPosterior& post) {
  double kl = 0.0;
  for (int d = 0; d < post.dim(); ++d) {
    kl += 0.5 * (post.var[d] + post.mu[d] * post.mu[d] - 1.0 - std::log(post.var[d]));
  }
  return kl;
}

// Graph loss pieces -------------------------------------------------------------

Var kl_to_prior(const Var& mu, const Var& var) {
  return scale(sum(add_scalar(var + square(mu) - log(var), -1.0)), 0.5);
}

Var position_loss(const Var& delta_hat, const Tensor& o, const Tensor& o_next, const NormalizationConfig& norm) {
  Graph& g = delta_hat.graph();
  const Eigen::Index n = o.rows();
  Tensor target(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      target(i, c) = (o_next(i, kObsWaypoints + c) - o(i, kObsWaypoints + c)) * norm.k_p[c];
    }
  }
  const Var pred = slice_cols(delta_hat, kObsWaypoints, 3);
  return mean(square(pred - g.constant(std::move(target))));
}

Var reward_loss(const Var& r_hat, const Tensor& r, double huber_delta) {
  Graph& g = r_hat.graph();
  return mean(huber(r_hat - g.constant(r), huber_delta));
}

Var specialization_loss(const Var& z_means, double eps, double lo, double hi) {
  const Var centered = z_means - repeat_rows(mean_rows(z_means), z_means.rows());
  const Var task_var = mean_rows(square(centered));  // population variance, 1 x D
  return clamp(-log(add_scalar(mean(task_var), eps)), lo, hi);
}

// Encoder ------------------------------------------------------------------------

PredictiveEncoder::PredictiveEncoder(const EncoderConfig& cfg, const NormalizationConfig& norm, Rng& init_rng)
    : cfg_(cfg), norm_(norm), kl_weight_(cfg.kl_weight_init) {
  if (cfg.latent_dim <= 0) throw std::invalid_argument("encoder latent_dim must be positive");
  if (cfg.hidden.empty()) throw std::invalid_argument("encoder needs at least one hidden layer");
  const int d = cfg.latent_dim;

  auto widths = [&](int in, int out) {
    std::vector<int> w{in};
    w.insert(w.end(), cfg.hidden.begin(), cfg.hidden.end());
    w.push_back(out);
    return w;
  };
  factor_net_ = nn::Mlp("encoder.factor", {widths(kTransitionDim, 2 * d)});
  dynamics_head_ = nn::Mlp("encoder.f_dyn", {widths(kObsDim + kActDim + d, kObsDim)});
  reward_head_ = nn::Mlp("encoder.f_rew", {widths(kObsDim + d, 1)});

  factor_net_.init_orthogonal(init_rng, std::sqrt(2.0), 0.01);
  reward_head_.init_orthogonal(init_rng, std::sqrt(2.0), 1.0);
  Rng dyn_rng(cfg.dynamics_head_seed, 0);
  dynamics_head_.init_orthogonal(dyn_rng, std::sqrt(2.0), 1.0);
  reset_optimizer();
}

void PredictiveEncoder::reset_optimizer() {
  nn::AdamConfig ac;
  ac.lr = cfg_.lr;
  ac.max_grad_norm = cfg_.max_grad_norm;
  optimizer_ = nn::Adam(trainable_parameters(), ac);
}

std::vector<nn::Parameter*> PredictiveEncoder::trainable_parameters() {
  std::vector<nn::Parameter*> out = factor_net_.parameters();
  for (nn::Parameter* p : reward_head_.parameters()) out.push_back(p);
  return out;
}

std::vector<const nn::Parameter*> PredictiveEncoder::all_parameters() const {
  std::vector<const nn::Parameter*> out = factor_net_.parameters();
  for (const nn::Parameter* p : dynamics_head_.parameters()) out.push_back(p);
  for (const nn::Parameter* p : reward_head_.parameters()) out.push_back(p);
  return out;
}

std::uint64_t PredictiveEncoder::dynamics_head_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const nn::Parameter* p : dynamics_head_.parameters()) {
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(p->value.data());
    h = nn::fnv1a({bytes, static_cast<std::size_t>(p->value.size()) * sizeof(double)}, h);
  }
  return h;
}

Tensor PredictiveEncoder::transition_inputs(std::span<const Transition> ts) const {
  Tensor x(static_cast<Eigen::Index>(ts.size()), kTransitionDim);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const Transition& t = ts[i];
    x.block(row, 0, 1, kObsDim) = t.o.transpose();
    x.block(row, kObsDim, 1, kActDim) = t.a.transpose();
    x(row, kObsDim + kActDim) = t.r * cfg_.reward_input_scale;
    x.block(row, kObsDim + kActDim + 1, 1, kObsDim) = t.o_next.transpose();
  }
  return x;
}

PredictiveEncoder::Factors PredictiveEncoder::encode_factors(const Tensor& inputs) const {
  const int d = cfg_.latent_dim;
  const Tensor out = factor_net_.forward(inputs);
  Factors f;
  f.mu = out.leftCols(d);
  f.var = nn::kernels::softplus(out.rightCols(d)).array() + cfg_.eps;
  return f;
}

PredictiveEncoder::Factors PredictiveEncoder::encode_factors(std::span<const Transition> ts) const {
  return encode_factors(transition_inputs(ts));
}

LatentPosterior PredictiveEncoder::infer(std::span<const Transition> ts) const {
  if (ts.empty()) return LatentPosterior::prior(cfg_.latent_dim);
  const Factors f = encode_factors(ts);
  return aggregate_posterior(f.mu, f.var);
}

std::pair<Var, Var> PredictiveEncoder::encode_factors(Graph& g, const Tensor& inputs) {
  const int d = cfg_.latent_dim;
  const Var out = factor_net_.forward(g, g.constant(inputs));
  const Var mu = slice_cols(out, 0, d);
  const Var var = add_scalar(softplus(slice_cols(out, d, d)), cfg_.eps);
  return {mu, var};
}

PosteriorVars PredictiveEncoder::posterior(Graph& g, std::span<const Transition> ts) {
  if (ts.empty()) throw std::invalid_argument("PredictiveEncoder::posterior: empty context");
  const auto [mu_n, var_n] = encode_factors(g, transition_inputs(ts));
  const Var prec = reciprocal(var_n);
  const Var var = reciprocal(sum_rows(prec));
  const Var mu = var * sum_rows(prec * mu_n);
  return {mu, var};
}

Var PredictiveEncoder::predict_dynamics(Graph& g, const Tensor& o, const Tensor& a, const Var& z_rows) {
  const Var x = nn::concat_cols({g.constant(o), g.constant(a), z_rows});
  return dynamics_head_.forward(g, x, /*frozen=*/true);
}

Tensor PredictiveEncoder::predict_dynamics(const Tensor& o, const Tensor& a, const Tensor& z_rows) const {
  Tensor x(o.rows(), o.cols() + a.cols() + z_rows.cols());
  x << o, a, z_rows;
  return dynamics_head_.forward(x);
}

Var PredictiveEncoder::predict_reward(Graph& g, const Tensor& o, const Var& z_rows) {
  const Var x = nn::concat_cols({g.constant(o), z_rows});
  return reward_head_.forward(g, x);
}

EncoderLossTerms PredictiveEncoder::build_loss(Graph& g, std::span<const TaskContext> tasks, double kl_weight,
                                               Rng& noise, Var* total_out) {
  const int d = cfg_.latent_dim;
  EncoderLossTerms terms;
  terms.kl_weight = kl_weight;

  std::vector<Var> kls, poss, rews, means;
  for (const TaskContext& task : tasks) {
    const auto& ts = task.transitions;
    if (ts.empty()) continue;
    const auto n = static_cast<Eigen::Index>(ts.size());
    const PosteriorVars post = posterior(g, ts);

    Tensor xi(1, d);
    for (int k = 0; k < d; ++k) xi(0, k) = noise.normal();
    const Var z = post.mu + sqrt(post.var) * g.constant(std::move(xi));
    const Var z_rows = repeat_rows(z, n);

    Tensor o(n, kObsDim), o_next(n, kObsDim), a(n, kActDim), r(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Transition& t = ts[static_cast<std::size_t>(i)];
      o.row(i) = t.o.transpose();
      o_next.row(i) = t.o_next.transpose();
      a.row(i) = t.a.transpose();
      r(i, 0) = t.r;
    }

    kls.push_back(kl_to_prior(post.mu, post.var));
    poss.push_back(position_loss(predict_dynamics(g, o, a, z_rows), o, o_next, norm_));
    rews.push_back(reward_loss(predict_reward(g, o, z_rows), r, cfg_.huber_delta));
    means.push_back(post.mu);
  }
  terms.tasks = static_cast<int>(kls.size());
  if (kls.empty()) throw std::invalid_argument("encoder loss: every task context is empty");

  const double inv_t = 1.0 / static_cast<double>(kls.size());
  const Var kl = scale(sum(concat_cols(kls)), inv_t);
  const Var pos = scale(sum(concat_cols(poss)), inv_t);
  const Var rew = scale(sum(concat_cols(rews)), inv_t);
  const Var spec = specialization_loss(stack_rows(means), cfg_.eps, cfg_.spec_min, cfg_.spec_max);

  const Var total = scale(kl, kl_weight) + scale(pos, cfg_.w_pos) + scale(rew, cfg_.w_rew) + scale(spec, cfg_.w_spec);
  terms.kl = kl.item();
  terms.pos = pos.item();
  terms.rew = rew.item();
  terms.spec = spec.item();
  terms.total = total.item();
  if (total_out != nullptr) *total_out = total;
  return terms;
}

EncoderLossTerms PredictiveEncoder::loss(std::span<const TaskContext> tasks, double kl_weight, Rng& noise) {
  Graph g;
  return build_loss(g, tasks, kl_weight, noise, nullptr);
}

EncoderLossTerms PredictiveEncoder::loss_and_backward(std::span<const TaskContext> tasks, double kl_weight,
                                                      Rng& noise) {
  Graph g;
  Var total;
  EncoderLossTerms terms = build_loss(g, tasks, kl_weight, noise, &total);
  g.backward(total);
  return terms;
}

EncoderLossTerms PredictiveEncoder::update(std::span<const TaskContext> tasks, Rng& noise) {
  optimizer_.zero_grad();
  EncoderLossTerms terms = loss_and_backward(tasks, kl_weight_, noise);
  optimizer_.step();
  adapt_kl_weight(terms.kl);
  return terms;
}

void PredictiveEncoder::adapt_kl_weight(double batch_kl) {
  if (batch_kl > cfg_.effective_kl_target()) {
    kl_weight_ *= 1.0 + cfg_.kl_alpha;
  } else {
    kl_weight_ *= 1.0 - cfg_.kl_beta;
  }
  kl_weight_ = std::clamp(kl_weight_, cfg_.kl_weight_min, cfg_.kl_weight_max);
}

}  // namespace maven
