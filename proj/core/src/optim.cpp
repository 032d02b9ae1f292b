#include "catsnn/optim.hpp"

#include <cmath>
#include <numbers>

namespace catsnn {

AdamW::AdamW(double weight_decay, double beta1, double beta2, double eps)
    : weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(std::span<const ParamUpdate> params, double lr) {
  if (!(lr > 0.0)) throw ContractError("AdamW: learning rate must be positive");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value->shape(), 0.0);
      v_.emplace_back(p.value->shape(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw StateError("AdamW: parameter list changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k].value;
    const Tensor& g = *params[k].grad;
    if (p.shape() != g.shape() || p.shape() != m_[k].shape())
      throw DimensionError("AdamW: parameter/gradient shape mismatch " + to_string(p.shape()));
    const double decay = params[k].decay ? 1.0 - lr * weight_decay_ : 1.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g[i];
      v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m_[k][i] / bc1;
      const double vhat = v_[k][i] / bc2;
      p[i] = p[i] * decay - lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0) return lr0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0;
}

}  // namespace catsnn
