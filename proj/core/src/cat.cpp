#include "catsnn/cat.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "catsnn/ops.hpp"

namespace catsnn {

std::string to_string(CodebookQuantMode mode) {
  return mode == CodebookQuantMode::UnitRange ? "unit-range" : "resolution-preserving";
}

CodebookQuantMode parse_quant_mode(const std::string& text) {
  if (text == "unit-range") return CodebookQuantMode::UnitRange;
  if (text == "resolution-preserving") return CodebookQuantMode::ResolutionPreserving;
  throw ParseError("unknown codebook quantization mode '" + text + "'");
}

std::int32_t max_code(int bitwidth) {
  if (bitwidth < 2 || bitwidth > 16) throw ContractError("bit-width out of range: " + std::to_string(bitwidth));
  return (std::int32_t{1} << (bitwidth - 1)) - 1;
}

std::vector<double> Codebook::reconstructed_levels() const {
  if (!q_levels) throw StateError("codebook has not been quantized");
  std::vector<double> out;
  out.reserve(q_levels->size());
  for (auto q : *q_levels) out.push_back(scale * static_cast<double>(q));
  return out;
}

void Codebook::validate() const {
  if (levels.size() < 2) throw ContractError("codebook needs at least two levels");
  for (double c : levels)
    if (!std::isfinite(c)) throw ContractError("codebook level is not finite");
  if (q_levels) {
    if (q_levels->size() != levels.size()) throw StateError("quantized codebook size mismatch");
    const auto hi = max_code(bitwidth);
    for (auto q : *q_levels)
      if (q < -hi || q > hi) throw StateError("quantized level outside the representable range");
  }
}

Assignment assign(const Tensor& latent, std::span<const double> levels) {
  if (levels.empty()) throw ContractError("assign: empty codebook");
  for (double c : levels)
    if (!std::isfinite(c)) throw ContractError("assign: codebook level is not finite");
  Assignment out{std::vector<std::int32_t>(latent.size()), Tensor(latent.shape())};
  for (std::size_t i = 0; i < latent.size(); ++i) {
    const double w = latent[i];
    std::size_t best = 0;
    double best_d = (w - levels[0]) * (w - levels[0]);
    for (std::size_t k = 1; k < levels.size(); ++k) {
      const double d = (w - levels[k]) * (w - levels[k]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    out.index[i] = static_cast<std::int32_t>(best);
    out.snapped[i] = levels[best];
  }
  return out;
}

Var effective_weight(const Var& latent, const Var& w_q, bool route_to_codebook) {
  if (latent.shape() != w_q.shape())
    throw DimensionError("effective_weight: latent " + to_string(latent.shape()) + " vs quantized " +
                         to_string(w_q.shape()));
  return latent.graph()->record("effective_weight", w_q.value(), {latent, w_q},
                                [route_to_codebook](const Tensor& g, auto gin) {
                                  if (gin[0])
                                    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
                                  if (gin[1] && route_to_codebook)
                                    for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i];
                                });
}

Var commitment_loss(const Var& levels, const std::vector<std::int32_t>& index, const Tensor& latent) {
  Graph& g = *levels.graph();
  Var w_q = ops::gather(levels, index, latent.shape());
  Var frozen = g.leaf(latent);
  return ops::mean(ops::square(ops::sub(w_q, frozen)));
}

double commitment_loss(const Tensor& w_q, const Tensor& latent) {
  if (w_q.shape() != latent.shape()) throw DimensionError("commitment_loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < w_q.size(); ++i) acc += (w_q[i] - latent[i]) * (w_q[i] - latent[i]);
  return acc / static_cast<double>(w_q.size());
}

Var total_loss(const Var& task, const Var& commit, double beta_commit) {
  if (beta_commit < 0.0) throw ContractError("beta_commit must be non-negative");
  return ops::add(task, ops::scale(commit, beta_commit));
}

double total_loss(double task, double commit, double beta_commit) {
  if (beta_commit < 0.0) throw ContractError("beta_commit must be non-negative");
  return task + beta_commit * commit;
}

Codebook quantize_codebook(const Codebook& codebook, int bitwidth, CodebookQuantMode mode) {
  if (bitwidth != 2 && bitwidth != 4 && bitwidth != 8)
    throw ContractError("codebook bit-width must be 2, 4 or 8, got " + std::to_string(bitwidth));
  if (codebook.levels.empty()) throw ContractError("quantize_codebook: empty codebook");
  const auto [lo_it, hi_it] = std::minmax_element(codebook.levels.begin(), codebook.levels.end());
  const std::int32_t hi = max_code(bitwidth);

  double s = 1.0;
  if (mode == CodebookQuantMode::UnitRange) {
    s = std::max(*hi_it - *lo_it, 1.0);
  } else {
    double peak = 0.0;
    for (double c : codebook.levels) peak = std::max(peak, std::abs(c));
    s = std::max(peak, 1e-12) / static_cast<double>(hi);
  }

  Codebook out = codebook;
  out.scale = s;
  out.bitwidth = bitwidth;
  out.mode = mode;
  std::vector<std::int32_t> q;
  q.reserve(codebook.levels.size());
  for (double c : codebook.levels) {
    // std::round rounds half away from zero.
    const double r = std::round(c / s);
    q.push_back(static_cast<std::int32_t>(std::clamp(r, static_cast<double>(-hi), static_cast<double>(hi))));
  }
  out.q_levels = std::move(q);
  return out;
}

Tensor reconstruct_quantized(const Tensor& latent, const Codebook& codebook) {
  if (!codebook.quantized()) throw StateError("reconstruct_quantized: codebook has no integer levels");
  const auto table = codebook.reconstructed_levels();
  return assign(latent, table).snapped;
}

std::size_t reseed_dead_levels(Codebook& codebook, const Tensor& latent, std::span<const std::size_t> usage) {
  if (usage.size() != codebook.m()) throw DimensionError("reseed_dead_levels: usage length mismatch");
  std::size_t reseeded = 0;
  std::vector<bool> taken(latent.size(), false);
  for (std::size_t k = 0; k < codebook.m(); ++k) {
    if (usage[k] != 0) continue;
    const auto current = assign(latent, codebook.levels);
    std::size_t far = latent.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < latent.size(); ++i) {
      if (taken[i]) continue;
      const double d = std::abs(latent[i] - current.snapped[i]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far == latent.size()) break;
    taken[far] = true;
    codebook.levels[k] = latent[far];
    ++reseeded;
  }
  return reseeded;
}

std::size_t count_unique(std::span<const double> values) {
  return std::set<double>(values.begin(), values.end()).size();
}

}  // namespace catsnn
