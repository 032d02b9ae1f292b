#include "catsnn/snn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "catsnn/ops.hpp"

namespace catsnn {

void LifConfig::validate() const {
  if (!(beta > 0.0 && beta <= 1.0)) throw ContractError("LIF beta must lie in (0, 1], got " + std::to_string(beta));
  if (!(u_thr > 0.0)) throw ContractError("LIF threshold must be positive");
  if (t_steps < 1) throw ContractError("LIF needs at least one timestep");
  if (!(surrogate_alpha > 0.0)) throw ContractError("surrogate alpha must be positive");
}

LifState zero_lif_state(Graph& g, const Shape& shape) {
  return LifState{g.leaf(Tensor(shape, 0.0)), g.leaf(Tensor(shape, 0.0))};
}

double surrogate_derivative(double x, double alpha) {
  const double z = std::numbers::pi / 2.0 * alpha * x;
  return alpha / (2.0 * (1.0 + z * z));
}

Var surrogate_spike(const Var& x, double alpha) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? 1.0 : 0.0;
  const Tensor* px = &x.value();
  return x.graph()->record("surrogate_spike", std::move(out), {x}, [px, alpha](const Tensor& g, auto gin) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * surrogate_derivative((*px)[i], alpha);
  });
}

Var smooth_spike(const Var& x, double alpha) {
  Tensor out = x.value();
  const double k = std::numbers::pi / 2.0 * alpha;
  for (auto& v : out.values()) v = std::atan(k * v) / std::numbers::pi + 0.5;
  const Tensor* px = &x.value();
  return x.graph()->record("smooth_spike", std::move(out), {x}, [px, alpha](const Tensor& g, auto gin) {
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * surrogate_derivative((*px)[i], alpha);
  });
}

LifStepResult lif_step(const Var& i_in, const LifState& state, const LifConfig& cfg, SpikeMode mode) {
  if (i_in.shape() != state.u.shape() || i_in.shape() != state.s.shape())
    throw DimensionError("lif_step: input " + to_string(i_in.shape()) + " vs state " + to_string(state.u.shape()));
  Var u = ops::add(ops::scale(state.u, cfg.beta), i_in);
  u = ops::sub(u, ops::scale(state.s, cfg.beta * cfg.u_thr));
  Var shifted = ops::add(u, -cfg.u_thr);
  Var s = mode == SpikeMode::Hard ? surrogate_spike(shifted, cfg.surrogate_alpha)
                                  : smooth_spike(shifted, cfg.surrogate_alpha);
  return LifStepResult{s, LifState{u, s}};
}

Tensor encode_replicate(const Tensor& x, std::size_t t_steps) {
  if (t_steps < 1) throw ContractError("encode_replicate: t_steps must be >= 1");
  if (x.rank() < 2) throw DimensionError("encode_replicate: expected batch-major input, got " + to_string(x.shape()));
  const std::size_t n = x.dim(0);
  const std::size_t inner = x.size() / n;
  Shape shape{n, t_steps};
  shape.insert(shape.end(), x.shape().begin() + 1, x.shape().end());
  Tensor out(shape);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t t = 0; t < t_steps; ++t)
      std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(b * inner), inner,
                  out.data().begin() + static_cast<std::ptrdiff_t>((b * t_steps + t) * inner));
  return out;
}

Tensor time_slice(const Tensor& x_seq, std::size_t t) {
  if (x_seq.rank() < 3 || t >= x_seq.dim(1))
    throw DimensionError("time_slice: slot " + std::to_string(t) + " of " + to_string(x_seq.shape()));
  const std::size_t n = x_seq.dim(0), steps = x_seq.dim(1);
  const std::size_t inner = x_seq.size() / (n * steps);
  Shape shape{n};
  shape.insert(shape.end(), x_seq.shape().begin() + 2, x_seq.shape().end());
  Tensor out(shape);
  for (std::size_t b = 0; b < n; ++b)
    std::copy_n(x_seq.data().begin() + static_cast<std::ptrdiff_t>((b * steps + t) * inner), inner,
                out.data().begin() + static_cast<std::ptrdiff_t>(b * inner));
  return out;
}

}  // namespace catsnn
