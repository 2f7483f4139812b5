#include "maven/nn/mlp.hpp"

#include <stdexcept>

namespace maven::nn {

Activation activation_from_string(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "softplus") return Activation::softplus;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
  }
  return "identity";
}

namespace {

Var activate(const Var& x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh(x);
    case Activation::softplus: return softplus(x);
  }
  return x;
}

Tensor activate(Tensor x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return kernels::relu(x);
    case Activation::tanh: return kernels::tanh(x);
    case Activation::softplus: return kernels::softplus(x);
  }
  return x;
}

}  // namespace

Mlp::Mlp(std::string prefix, MlpSpec spec) : prefix_(std::move(prefix)), spec_(std::move(spec)) {
  if (spec_.widths.size() < 3) throw std::invalid_argument("Mlp: need at least one hidden layer");
  for (std::size_t k = 0; k + 1 < spec_.widths.size(); ++k) {
    const Index in = spec_.widths[k];
    const Index out = spec_.widths[k + 1];
    weights_.emplace_back(prefix_ + "." + std::to_string(k) + ".weight", Tensor::Zero(out, in));
    biases_.emplace_back(prefix_ + "." + std::to_string(k) + ".bias", Tensor::Zero(1, out));
  }
}

Tensor orthogonal(Index rows, Index cols, Rng& rng, double gain) {
  const Index big = std::max(rows, cols);
  const Index small = std::min(rows, cols);
  Eigen::MatrixXd a(big, small);
  for (Index i = 0; i < big; ++i) {
    for (Index j = 0; j < small; ++j) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign fix so the distribution is uniform over orthogonal matrices.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (Index j = 0; j < small; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  Tensor out = (rows >= cols) ? Tensor(q) : Tensor(q.transpose());
  return gain * out;
}

void Mlp::init_orthogonal(Rng& rng, double hidden_gain, double output_gain) {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const double gain = (k + 1 == weights_.size()) ? output_gain : hidden_gain;
    Parameter& w = weights_[k];
    w.value = orthogonal(w.value.rows(), w.value.cols(), rng, gain);
    biases_[k].value.setZero();
  }
}

Var Mlp::forward(Graph& g, const Var& x, bool frozen) {
  if (x.cols() != spec_.input_dim()) throw std::invalid_argument("Mlp::forward: input width mismatch");
  Var h = x;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    Var W = frozen ? g.constant(weights_[k].value) : g.parameter(weights_[k]);
    Var b = frozen ? g.constant(biases_[k].value) : g.parameter(biases_[k]);
    h = linear(h, W, b);
    h = activate(h, k + 1 == weights_.size() ? spec_.output : spec_.hidden);
  }
  return h;
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.cols() != spec_.input_dim()) throw std::invalid_argument("Mlp::forward: input width mismatch");
  Tensor h = x;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    h = kernels::affine(h, weights_[k].value, biases_[k].value);
    h = activate(std::move(h), k + 1 == weights_.size() ? spec_.output : spec_.hidden);
  }
  return h;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    out.push_back(&weights_[k]);
    out.push_back(&biases_[k]);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    out.push_back(&weights_[k]);
    out.push_back(&biases_[k]);
  }
  return out;
}

}  // namespace maven::nn
