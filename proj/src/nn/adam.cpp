#include "maven/nn/adam.hpp"

#include <cmath>

namespace maven::nn {

void adam_update(Tensor& param, const Tensor& grad, AdamMoments& moments, long step, const AdamConfig& cfg) {
  if (moments.m.size() != param.size()) {
    moments.m = Tensor::Zero(param.rows(), param.cols());
    moments.v = Tensor::Zero(param.rows(), param.cols());
  }
  moments.m = cfg.beta1 * moments.m + (1.0 - cfg.beta1) * grad;
  moments.v = cfg.beta2 * moments.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  param.array() -= cfg.lr * (moments.m.array() / c1) / ((moments.v.array() / c2).sqrt() + cfg.eps);
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  moments_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& v = params_[i]->value;
    moments_[i].m = Tensor::Zero(v.rows(), v.cols());
    moments_[i].v = Tensor::Zero(v.rows(), v.cols());
  }
}

double Adam::grad_norm() const {
  double sq = 0.0;
  for (const Parameter* p : params_) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

void Adam::step() {
  ++steps_;
  last_grad_norm_ = grad_norm();
  double scale = 1.0;
  if (cfg_.max_grad_norm > 0.0 && last_grad_norm_ > cfg_.max_grad_norm) {
    scale = cfg_.max_grad_norm / (last_grad_norm_ + 1e-12);
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    if (scale != 1.0) {
      const Tensor g = p->grad * scale;
      adam_update(p->value, g, moments_[i], steps_, cfg_);
    } else {
      adam_update(p->value, p->grad, moments_[i], steps_, cfg_);
    }
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace maven::nn
