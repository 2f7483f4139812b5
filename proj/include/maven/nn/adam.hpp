#pragma once

#include "maven/nn/graph.hpp"

#include <vector>

namespace maven::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 0.0;  // <= 0 disables clipping
};

struct AdamMoments {
  Tensor m;
  Tensor v;
};

/// In-place bias-corrected Adam update of one tensor; `step` is 1-based.
void adam_update(Tensor& param, const Tensor& grad, AdamMoments& moments, long step, const AdamConfig& cfg);

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  /// Optionally clips the global gradient norm, then updates every parameter.
  /// Gradients are left untouched; call zero_grad() before the next backward.
  void step();
  void zero_grad();

  double grad_norm() const;  // global L2 norm of the current gradients
  double last_grad_norm() const { return last_grad_norm_; }
  long steps() const { return steps_; }
  AdamConfig& config() { return cfg_; }
  const std::vector<Parameter*>& parameters() const { return params_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamMoments> moments_;
  AdamConfig cfg_;
  long steps_ = 0;
  double last_grad_norm_ = 0.0;
};

}  // namespace maven::nn
