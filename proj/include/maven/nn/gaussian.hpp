// State-independent diagonal Gaussian policy head.
//
// The network output passes through tanh to give the mean in [-1, 1]; actions
// are drawn from N(mean, exp(log_std)^2) and scored with the plain Gaussian
// density. Mapping the draw into the bounded action space (clamping) is left
// to the caller.
#pragma once

#include "maven/nn/graph.hpp"
#include "maven/rng.hpp"

namespace maven::nn {

struct GaussianHead {
  Parameter log_std;
  double min_log_std = -5.0;
  double max_log_std = 2.0;

  GaussianHead() = default;
  GaussianHead(std::string name, Index dim, double init_log_std)
      : log_std(std::move(name), Tensor::Constant(1, dim, init_log_std)) {}

  Index dim() const { return log_std.value.cols(); }
  /// log_std after clamping to [min_log_std, max_log_std].
  Tensor clamped_log_std() const { return log_std.value.cwiseMax(min_log_std).cwiseMin(max_log_std); }
};

struct GaussianSample {
  Tensor draw;  // 1 x dim, pre-clamp
  double logp = 0.0;
};

/// Draws around `mean` (1 x dim, already squashed). With `deterministic` the
/// draw is the mean itself.
GaussianSample gaussian_sample_logprob(const GaussianHead& head, const Tensor& mean, Rng& rng,
                                       bool deterministic = false);

/// Log density of each row of `x` (B x dim) under N(mean, diag(exp(2 log_std))).
Tensor gaussian_log_prob(const Tensor& mean, const Tensor& log_std, const Tensor& x);

/// Graph versions; returns B x 1 log-probs and the 1x1 entropy.
Var gaussian_log_prob(const Var& mean, const Var& log_std, const Tensor& x);
Var gaussian_entropy(const Var& log_std);

/// log_std as a graph leaf with the head's clamp applied.
Var log_std_var(Graph& g, GaussianHead& head);

}  // namespace maven::nn
