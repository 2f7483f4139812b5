// Tape-based reverse-mode differentiation over dense row-major matrices.
//
// Every value is a 2-D tensor (rows = batch, cols = features); scalars are
// 1x1. A Graph records each op with a closure that pushes the output
// gradient to its inputs. Graphs are single-use: build, backward, discard.
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

namespace maven::nn {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

inline std::vector<std::size_t> shape_of(const Tensor& t) {
  return {static_cast<std::size_t>(t.rows()), static_cast<std::size_t>(t.cols())};
}

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

// Handle to a node in a Graph.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double item() const { return value()(0, 0); }
  Graph& graph() const { return *graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf without gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is added to `p.grad` by backward().
  Var parameter(Parameter& p);

  /// Accumulates d(loss)/d(parameter) into every parameter leaf. `loss` must be 1x1.
  void backward(const Var& loss);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient of an interior node after backward(); zero if it was unreached.
  Tensor grad(const Var& v) const;

  // Op construction (used by ops.cpp).
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);
  const Tensor& out_grad(int self) const { return nodes_[static_cast<std::size_t>(self)].grad; }
  void accumulate(const Var& input, const Tensor& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
};

// Ops --------------------------------------------------------------------------
// Binary elementwise ops broadcast when the second operand is 1x1, 1xC or Rx1.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var minimum(const Var& a, const Var& b);  // same shape

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }

Var scale(const Var& x, double c);
Var add_scalar(const Var& x, double c);
inline Var operator*(double c, const Var& x) { return scale(x, c); }
inline Var operator-(const Var& x) { return scale(x, -1.0); }

/// x * W^T + b with W (out x in) and b (1 x out).
Var linear(const Var& x, const Var& W, const Var& b);
Var matmul(const Var& a, const Var& b);

Var relu(const Var& x);
Var tanh(const Var& x);
Var softplus(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var sqrt(const Var& x);
Var square(const Var& x);
Var reciprocal(const Var& x);
/// Elementwise clamp; gradient passes only strictly inside (lo, hi).
Var clamp(const Var& x, double lo, double hi);
/// Elementwise Huber of x (the residual) with threshold delta.
Var huber(const Var& x, double delta);

Var sum(const Var& x);  // 1x1
Var mean(const Var& x);  // 1x1
Var sum_rows(const Var& x);  // 1xC column sums
Var mean_rows(const Var& x);  // 1xC column means
Var sum_cols(const Var& x);  // Rx1 row sums
Var repeat_rows(const Var& x, Index n);  // 1xC -> nxC
Var concat_cols(const std::vector<Var>& parts);
Var stack_rows(const std::vector<Var>& rows);
Var slice_cols(const Var& x, Index start, Index count);

// Shared numeric kernels so that graph-free inference reproduces the graph's
// forward values bit-for-bit.
namespace kernels {
Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);
}  // namespace kernels

}  // namespace maven::nn
