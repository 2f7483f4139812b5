#include "maven/nn/gaussian.hpp"

#include <cmath>
#include <numbers>

namespace maven::nn {

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
}

Tensor gaussian_log_prob(const Tensor& mean, const Tensor& log_std, const Tensor& x) {
  const Tensor z = (x - mean).array().rowwise() / log_std.row(0).array().exp();
  const double norm = log_std.sum() + kHalfLog2Pi * static_cast<double>(x.cols());
  Tensor out = (-0.5 * z.array().square()).rowwise().sum() - norm;
  return out;
}

GaussianSample gaussian_sample_logprob(const GaussianHead& head, const Tensor& mean, Rng& rng,
                                       bool deterministic) {
  const Tensor log_std = head.clamped_log_std();
  GaussianSample s;
  s.draw = mean;
  if (!deterministic) {
    for (Index j = 0; j < mean.cols(); ++j) s.draw(0, j) += std::exp(log_std(0, j)) * rng.normal();
  }
  s.logp = gaussian_log_prob(mean, log_std, s.draw)(0, 0);
  return s;
}

Var gaussian_log_prob(const Var& mean, const Var& log_std, const Tensor& x) {
  Graph& g = mean.graph();
  Var diff = g.constant(x) - mean;
  Var z = diff / exp(log_std);
  Var quad = scale(sum_cols(square(z)), -0.5);
  Var norm = add_scalar(sum(log_std), kHalfLog2Pi * static_cast<double>(x.cols()));
  return quad - norm;
}

Var gaussian_entropy(const Var& log_std) {
  return add_scalar(sum(log_std), static_cast<double>(log_std.cols()) * (0.5 + kHalfLog2Pi));
}

Var log_std_var(Graph& g, GaussianHead& head) {
  return clamp(g.parameter(head.log_std), head.min_log_std, head.max_log_std);
}

}  // namespace maven::nn
