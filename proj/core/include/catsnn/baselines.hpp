#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "catsnn/autograd.hpp"

namespace catsnn {

// ---------------------------------------------------------------------------
// 1-D k-means

struct KMeansResult {
  std::vector<double> centroids;
  std::vector<std::int32_t> assignment;
  double inertia = 0.0;
  /// Inertia after every Lloyd iteration of the returned run.
  std::vector<double> inertia_history;
};

struct KMeansOptions {
  std::size_t max_iters = 100;
  /// Independent k-means++ restarts; the lowest-inertia run wins.
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
};

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing. Empty clusters are reseeded at the point farthest from its
/// centroid. One extra Lloyd run starts from the exact optimal contiguous
/// partition, so the result is the global optimum. Centroids are returned in
/// ascending order.
KMeansResult kmeans_1d(std::span<const double> points, std::size_t m, const KMeansOptions& opts = {});

double kmeans_inertia(std::span<const double> points, std::span<const double> centroids,
                      std::span<const std::int32_t> assignment);

// ---------------------------------------------------------------------------
// Uniform fake quantization

/// Scale max|w| / (2^(b-1) - 1); zero for an all-zero tensor.
double fake_quant_scale(const Tensor& w, int bits);
/// q * clip(round(w / q), -(2^(b-1)-1), 2^(b-1)-1). An all-zero tensor passes through.
Tensor uniform_fake_quant(const Tensor& w, int bits);
/// Graph version with a straight-through backward.
Var uniform_fake_quant(const Var& w, int bits);

// ---------------------------------------------------------------------------
// Trained ternary quantization

struct TernaryLayer {
  Tensor latent;
  double w_pos = 1.0;
  double w_neg = 1.0;
  double threshold_frac = 0.05;
};

/// Per-weight region: +1 above the threshold, -1 below its negative, else 0.
std::vector<std::int8_t> ternary_masks(const Tensor& latent, double threshold_frac);

/// Scales initialised to the mean |latent| of their regions.
TernaryLayer init_ternary(Tensor latent, double threshold_frac = 0.05);

Tensor ternary_forward(const TernaryLayer& layer);

/// w_eff = +w_pos / -w_neg / 0 by region. Backward: d w_pos = sum of g over
/// the positive region, d w_neg = -(sum of g over the negative region), and
/// the latent receives g scaled by w_pos / w_neg in those regions and g
/// unchanged in the zero region.
Var ternary_forward(const Var& latent, const Var& w_pos, const Var& w_neg, double threshold_frac);

}  // namespace catsnn
