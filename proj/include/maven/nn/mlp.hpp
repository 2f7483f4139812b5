#pragma once

#include "maven/nn/graph.hpp"
#include "maven/rng.hpp"

#include <string>
#include <vector>

namespace maven::nn {

enum class Activation { identity, relu, tanh, softplus };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

struct MlpSpec {
  std::vector<int> widths;  // input, hidden..., output
  Activation hidden = Activation::relu;
  Activation output = Activation::identity;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
};

/// Dense feed-forward network. Layer k stores W (out x in) and b (1 x out)
/// as parameters named "<prefix>.<k>.weight" / "<prefix>.<k>.bias".
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string prefix, MlpSpec spec);

  /// Orthogonal weights scaled by `hidden_gain` (last layer: `output_gain`),
  /// zero biases.
  void init_orthogonal(Rng& rng, double hidden_gain, double output_gain);

  /// Records the forward pass. With `frozen`, weights enter the graph as
  /// constants: gradients still flow to `x` but never into the weights.
  Var forward(Graph& g, const Var& x, bool frozen = false);
  /// Graph-free forward with the same arithmetic as the recorded one.
  Tensor forward(const Tensor& x) const;

  const MlpSpec& spec() const { return spec_; }
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  Parameter& weight(std::size_t layer) { return weights_[layer]; }
  Parameter& bias(std::size_t layer) { return biases_[layer]; }
  const Parameter& weight(std::size_t layer) const { return weights_[layer]; }
  const Parameter& bias(std::size_t layer) const { return biases_[layer]; }
  std::size_t layers() const { return weights_.size(); }

 private:
  std::string prefix_;
  MlpSpec spec_;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

/// Random (rows x cols) matrix with orthonormal rows or columns.
Tensor orthogonal(Index rows, Index cols, Rng& rng, double gain);

}  // namespace maven::nn
