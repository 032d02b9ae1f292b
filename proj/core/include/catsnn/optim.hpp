#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "catsnn/tensor.hpp"

namespace catsnn {

struct ParamUpdate {
  Tensor* value = nullptr;
  const Tensor* grad = nullptr;
  bool decay = true;
};

/// Adam with decoupled weight decay: p <- p * (1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps).
/// Moment buffers are keyed by position in the update list, so callers must
/// pass parameters in the same order every step.
class AdamW {
 public:
  explicit AdamW(double weight_decay = 1e-5, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(std::span<const ParamUpdate> params, double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// lr0 * (1 + cos(pi * step / total)) / 2, eta_min = 0.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

}  // namespace catsnn
