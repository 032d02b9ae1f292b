#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "catsnn/autograd.hpp"

// Clusterization-aware training: each layer keeps full-precision latent
// weights plus a learnable codebook of M levels. The forward pass snaps every
// latent weight to its nearest level; gradients reach the latents straight
// through and the levels via the commitment loss (and, optionally, via the
// forward read of the snapped value).
namespace catsnn {

enum class CodebookQuantMode {
  /// s = max(range, 1); integer levels clip(round(c / s)).
  UnitRange,
  /// s = max(max|c|, eps) / (2^(b-1) - 1); keeps b-bit resolution for
  /// codebooks whose range is below 1.
  ResolutionPreserving,
};

std::string to_string(CodebookQuantMode mode);
CodebookQuantMode parse_quant_mode(const std::string& text);

struct Codebook {
  std::vector<double> levels;
  /// Set by quantize_codebook.
  std::optional<std::vector<std::int32_t>> q_levels;
  double scale = 1.0;
  int bitwidth = 0;
  CodebookQuantMode mode = CodebookQuantMode::UnitRange;

  std::size_t m() const noexcept { return levels.size(); }
  bool quantized() const noexcept { return q_levels.has_value(); }
  /// s * c_hat for every level; requires quantized().
  std::vector<double> reconstructed_levels() const;
  void validate() const;
};

/// Symmetric integer range [-2^(b-1)+1, 2^(b-1)-1].
std::int32_t max_code(int bitwidth);

struct Assignment {
  /// Zero-based nearest level per weight (ties go to the lowest index).
  std::vector<std::int32_t> index;
  Tensor snapped;
};

/// Nearest-level assignment of every latent weight.
Assignment assign(const Tensor& latent, std::span<const double> levels);

/// Forward value is w_q; the upstream gradient flows unchanged into `latent`.
/// When `route_to_codebook` is set the same gradient also reaches w_q (and so
/// the codebook entries it was gathered from).
Var effective_weight(const Var& latent, const Var& w_q, bool route_to_codebook = true);

/// (1/N_w) * sum (c_{k*} - w)^2 with w treated as a constant; only `levels`
/// receives gradient.
Var commitment_loss(const Var& levels, const std::vector<std::int32_t>& index, const Tensor& latent);
double commitment_loss(const Tensor& w_q, const Tensor& latent);

Var total_loss(const Var& task, const Var& commit, double beta_commit);
double total_loss(double task, double commit, double beta_commit);

Codebook quantize_codebook(const Codebook& codebook, int bitwidth,
                           CodebookQuantMode mode = CodebookQuantMode::UnitRange);

/// Snap latent weights onto the integer codebook: s * c_hat_{k*}.
Tensor reconstruct_quantized(const Tensor& latent, const Codebook& codebook);

/// Reseed every level whose usage count is zero at the latent weight farthest
/// from its currently assigned level. Returns the number of reseeded levels.
std::size_t reseed_dead_levels(Codebook& codebook, const Tensor& latent, std::span<const std::size_t> usage);

std::size_t count_unique(std::span<const double> values);

}  // namespace catsnn
