#pragma once

#include <cstddef>

#include "catsnn/autograd.hpp"

namespace catsnn {

/// Discrete LIF parameters. Defaults: beta 0.5, threshold 1.0, T = 4.
struct LifConfig {
  double beta = 0.5;
  double u_thr = 1.0;
  std::size_t t_steps = 4;
  double surrogate_alpha = 2.0;

  void validate() const;
};

/// How the spike nonlinearity is evaluated.
enum class SpikeMode {
  Hard,    ///< Heaviside forward, arctangent surrogate backward.
  Smooth,  ///< Arctangent sigmoid in both passes (for finite-difference checks).
};

/// Membrane potential and last emitted spikes of one layer.
struct LifState {
  Var u;
  Var s;
};

struct LifStepResult {
  Var spikes;
  LifState state;
};

LifState zero_lif_state(Graph& g, const Shape& shape);

/// u' = beta*u + i_in - beta*s*u_thr (s = previous spikes), spikes = 1(u' > u_thr).
LifStepResult lif_step(const Var& i_in, const LifState& state, const LifConfig& cfg,
                       SpikeMode mode = SpikeMode::Hard);

/// Heaviside of x with the arctangent surrogate derivative
/// alpha / (2 (1 + (pi/2 * alpha * x)^2)).
Var surrogate_spike(const Var& x, double alpha);

/// 1/pi * atan(pi/2 * alpha * x) + 1/2; its derivative is the surrogate above.
Var smooth_spike(const Var& x, double alpha);

double surrogate_derivative(double x, double alpha);

/// x[N x C x H x W] -> [N x T x C x H x W], each time slot a copy of x.
Tensor encode_replicate(const Tensor& x, std::size_t t_steps);

/// Slice time slot t out of x_seq[N x T x ...].
Tensor time_slice(const Tensor& x_seq, std::size_t t);

}  // namespace catsnn
