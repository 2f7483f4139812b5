#include "maven/nn/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace maven::nn {

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.graph_ != this) throw std::logic_error("Graph: mixing nodes from different graphs");
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(in.id_)].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::accumulate(const Var& input, const Tensor& g) {
  Node& n = nodes_[static_cast<std::size_t>(input.id_)];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Graph::backward(const Var& loss) {
  if (loss.graph_ != this) throw std::logic_error("Graph::backward: foreign node");
  const Tensor& lv = value(loss.id_);
  if (lv.rows() != 1 || lv.cols() != 1) throw std::invalid_argument("Graph::backward: loss must be 1x1");
  if (!std::isfinite(lv(0, 0))) throw std::runtime_error("Graph::backward: non-finite loss");
  accumulate(loss, Tensor::Ones(1, 1));
  for (int i = loss.id_; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

Tensor Graph::grad(const Var& v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id_)];
  if (!n.has_grad) return Tensor::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

enum class Bcast { same, row, col, scalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::same;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::col;
  throw std::invalid_argument("incompatible shapes " + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()));
}

Tensor expand(const Tensor& b, Index rows, Index cols, Bcast kind) {
  switch (kind) {
    case Bcast::same: return b;
    case Bcast::scalar: return Tensor::Constant(rows, cols, b(0, 0));
    case Bcast::row: return b.replicate(rows, 1);
    case Bcast::col: return b.replicate(1, cols);
  }
  return b;
}

Tensor reduce(const Tensor& g, Bcast kind) {
  switch (kind) {
    case Bcast::same: return g;
    case Bcast::scalar: return Tensor::Constant(1, 1, g.sum());
    case Bcast::row: return g.colwise().sum();
    case Bcast::col: return g.rowwise().sum();
  }
  return g;
}

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  const Bcast k = broadcast_kind(a.value(), b.value());
  Tensor bv = expand(b.value(), a.rows(), a.cols(), k);
  return a.graph().record(a.value() + bv, {a, b}, [a, b, k](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    g.accumulate(a, go);
    g.accumulate(b, reduce(go, k));
  });
}

Var sub(const Var& a, const Var& b) {
  const Bcast k = broadcast_kind(a.value(), b.value());
  Tensor bv = expand(b.value(), a.rows(), a.cols(), k);
  return a.graph().record(a.value() - bv, {a, b}, [a, b, k](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    g.accumulate(a, go);
    g.accumulate(b, reduce(-go, k));
  });
}

Var mul(const Var& a, const Var& b) {
  const Bcast k = broadcast_kind(a.value(), b.value());
  Tensor bv = expand(b.value(), a.rows(), a.cols(), k);
  Tensor out = a.value().cwiseProduct(bv);
  return a.graph().record(std::move(out), {a, b}, [a, b, k, bv](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    if (g.requires_grad(a.id())) g.accumulate(a, go.cwiseProduct(bv));
    if (g.requires_grad(b.id())) g.accumulate(b, reduce(go.cwiseProduct(a.value()), k));
  });
}

Var div(const Var& a, const Var& b) {
  const Bcast k = broadcast_kind(a.value(), b.value());
  Tensor bv = expand(b.value(), a.rows(), a.cols(), k);
  Tensor out = a.value().cwiseQuotient(bv);
  return a.graph().record(out, {a, b}, [a, b, k, bv, out](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    if (g.requires_grad(a.id())) g.accumulate(a, go.cwiseQuotient(bv));
    if (g.requires_grad(b.id())) g.accumulate(b, reduce(-go.cwiseProduct(out).cwiseQuotient(bv), k));
  });
}

Var minimum(const Var& a, const Var& b) {
  check_same(a.value(), b.value(), "minimum");
  Tensor out = a.value().cwiseMin(b.value());
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    const auto take_a = (a.value().array() <= b.value().array());
    g.accumulate(a, take_a.select(go, 0.0));
    g.accumulate(b, take_a.select(Tensor::Zero(go.rows(), go.cols()), go));
  });
}

Var scale(const Var& x, double c) {
  return x.graph().record(x.value() * c, {x}, [x, c](Graph& g, int self) {
    g.accumulate(x, g.out_grad(self) * c);
  });
}

Var add_scalar(const Var& x, double c) {
  return x.graph().record(x.value().array() + c, {x}, [x](Graph& g, int self) {
    g.accumulate(x, g.out_grad(self));
  });
}

namespace kernels {

Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b) {
  Tensor out(x.rows(), W.rows());
  out.noalias() = x * W.transpose();
  out.rowwise() += b.row(0);
  return out;
}

Tensor relu(const Tensor& x) { return x.cwiseMax(0.0); }

Tensor tanh(const Tensor& x) { return x.array().tanh(); }

Tensor softplus(const Tensor& x) {
  return x.unaryExpr([](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); });
}

}  // namespace kernels

Var linear(const Var& x, const Var& W, const Var& b) {
  if (x.cols() != W.cols() || b.rows() != 1 || b.cols() != W.rows()) {
    throw std::invalid_argument("linear: shape mismatch");
  }
  return x.graph().record(kernels::affine(x.value(), W.value(), b.value()), {x, W, b},
                          [x, W, b](Graph& g, int self) {
                            const Tensor& go = g.out_grad(self);
                            if (g.requires_grad(x.id())) {
                              Tensor gx(go.rows(), W.cols());
                              gx.noalias() = go * W.value();
                              g.accumulate(x, gx);
                            }
                            if (g.requires_grad(W.id())) {
                              Tensor gw(W.rows(), W.cols());
                              gw.noalias() = go.transpose() * x.value();
                              g.accumulate(W, gw);
                            }
                            if (g.requires_grad(b.id())) g.accumulate(b, go.colwise().sum());
                          });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  Tensor out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return a.graph().record(std::move(out), {a, b}, [a, b](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    if (g.requires_grad(a.id())) g.accumulate(a, go * b.value().transpose());
    if (g.requires_grad(b.id())) g.accumulate(b, a.value().transpose() * go);
  });
}

Var relu(const Var& x) {
  return x.graph().record(kernels::relu(x.value()), {x}, [x](Graph& g, int self) {
    g.accumulate(x, (x.value().array() > 0.0).select(g.out_grad(self), 0.0));
  });
}

Var tanh(const Var& x) {
  Tensor out = kernels::tanh(x.value());
  return x.graph().record(out, {x}, [x, out](Graph& g, int self) {
    g.accumulate(x, g.out_grad(self).cwiseProduct((1.0 - out.array().square()).matrix()));
  });
}

Var softplus(const Var& x) {
  return x.graph().record(kernels::softplus(x.value()), {x}, [x](Graph& g, int self) {
    const Tensor sig = x.value().unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    g.accumulate(x, g.out_grad(self).cwiseProduct(sig));
  });
}

Var exp(const Var& x) {
  Tensor out = x.value().array().exp();
  return x.graph().record(out, {x}, [x, out](Graph& g, int self) {
    g.accumulate(x, g.out_grad(self).cwiseProduct(out));
  });
}

Var log(const Var& x) {
  return x.graph().record(x.value().array().log(), {x}, [x](Graph& g, int self) {
    g.accumulate(x, g.out_grad(self).cwiseQuotient(x.value()));
  });
}

Var sqrt(const Var& x) {
  Tensor out = x.value().array().sqrt();
  return x.graph().record(out, {x}, [x, out](Graph& g, int self) {
    g.accumulate(x, (0.5 * g.out_grad(self).array() / out.array()).matrix());
  });
}

Var square(const Var& x) {
  return x.graph().record(x.value().array().square(), {x}, [x](Graph& g, int self) {
    g.accumulate(x, 2.0 * g.out_grad(self).cwiseProduct(x.value()));
  });
}

Var reciprocal(const Var& x) {
  Tensor out = x.value().array().inverse();
  return x.graph().record(out, {x}, [x, out](Graph& g, int self) {
    g.accumulate(x, -g.out_grad(self).cwiseProduct(out.cwiseProduct(out)));
  });
}

Var clamp(const Var& x, double lo, double hi) {
  return x.graph().record(x.value().cwiseMax(lo).cwiseMin(hi), {x}, [x, lo, hi](Graph& g, int self) {
    const auto inside = (x.value().array() > lo) && (x.value().array() < hi);
    g.accumulate(x, inside.select(g.out_grad(self), 0.0));
  });
}

Var huber(const Var& x, double delta) {
  Tensor out = x.value().unaryExpr([delta](double v) {
    const double a = std::abs(v);
    return a <= delta ? 0.5 * v * v : delta * (a - 0.5 * delta);
  });
  return x.graph().record(std::move(out), {x}, [x, delta](Graph& g, int self) {
    const Tensor d = x.value().unaryExpr([delta](double v) {
      return std::abs(v) <= delta ? v : (v > 0.0 ? delta : -delta);
    });
    g.accumulate(x, g.out_grad(self).cwiseProduct(d));
  });
}

Var sum(const Var& x) {
  return x.graph().record(Tensor::Constant(1, 1, x.value().sum()), {x}, [x](Graph& g, int self) {
    g.accumulate(x, Tensor::Constant(x.rows(), x.cols(), g.out_grad(self)(0, 0)));
  });
}

Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  return x.graph().record(Tensor::Constant(1, 1, x.value().sum() / n), {x}, [x, n](Graph& g, int self) {
    g.accumulate(x, Tensor::Constant(x.rows(), x.cols(), g.out_grad(self)(0, 0) / n));
  });
}

Var sum_rows(const Var& x) {
  return x.graph().record(x.value().colwise().sum(), {x}, [x](Graph& g, int self) {
    g.accumulate(x, g.out_grad(self).replicate(x.rows(), 1));
  });
}

Var mean_rows(const Var& x) {
  const double n = static_cast<double>(x.rows());
  return x.graph().record(x.value().colwise().sum() / n, {x}, [x, n](Graph& g, int self) {
    g.accumulate(x, g.out_grad(self).replicate(x.rows(), 1) / n);
  });
}

Var sum_cols(const Var& x) {
  return x.graph().record(x.value().rowwise().sum(), {x}, [x](Graph& g, int self) {
    g.accumulate(x, g.out_grad(self).replicate(1, x.cols()));
  });
}

Var repeat_rows(const Var& x, Index n) {
  if (x.rows() != 1) throw std::invalid_argument("repeat_rows: expects a row vector");
  return x.graph().record(x.value().replicate(n, 1), {x}, [x](Graph& g, int self) {
    g.accumulate(x, g.out_grad(self).colwise().sum());
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Tensor out(rows, cols);
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts.front().graph().record(std::move(out), parts, [parts](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    Index offset = 0;
    for (const Var& p : parts) {
      if (g.requires_grad(p.id())) g.accumulate(p, go.middleCols(offset, p.cols()));
      offset += p.cols();
    }
  });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: no inputs");
  const Index cols = rows.front().cols();
  Tensor out(static_cast<Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].rows() != 1 || rows[i].cols() != cols) throw std::invalid_argument("stack_rows: expects 1xC rows");
    out.row(static_cast<Index>(i)) = rows[i].value();
  }
  return rows.front().graph().record(std::move(out), rows, [rows](Graph& g, int self) {
    const Tensor& go = g.out_grad(self);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (g.requires_grad(rows[i].id())) g.accumulate(rows[i], go.row(static_cast<Index>(i)));
    }
  });
}

Var slice_cols(const Var& x, Index start, Index count) {
  if (start < 0 || start + count > x.cols()) throw std::invalid_argument("slice_cols: out of range");
  return x.graph().record(x.value().middleCols(start, count), {x}, [x, start, count](Graph& g, int self) {
    Tensor gx = Tensor::Zero(x.rows(), x.cols());
    gx.middleCols(start, count) = g.out_grad(self);
    g.accumulate(x, gx);
  });
}

}  // namespace maven::nn
