#include "catsnn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "catsnn/cat.hpp"

namespace catsnn {

namespace {

std::int32_t nearest(double p, std::span<const double> centroids) {
  std::size_t best = 0;
  double best_d = std::abs(p - centroids[0]);
  for (std::size_t k = 1; k < centroids.size(); ++k) {
    const double d = std::abs(p - centroids[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return static_cast<std::int32_t>(best);
}

std::vector<double> seed_plus_plus(std::span<const double> points, std::size_t m, std::mt19937_64& rng) {
  std::vector<double> centroids;
  centroids.reserve(m);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  centroids.push_back(points[pick(rng)]);
  std::vector<double> d2(points.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centroids.size() < m) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centroids) best = std::min(best, (points[i] - c) * (points[i] - c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) break;  // fewer distinct points than requested; caller validated
    double r = unit(rng) * total;
    std::size_t chosen = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      r -= d2[i];
      if (r < 0.0 && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    if (d2[chosen] <= 0.0)  // rounding landed on an existing centroid
      chosen = static_cast<std::size_t>(std::max_element(d2.begin(), d2.end()) - d2.begin());
    centroids.push_back(points[chosen]);
  }
  return centroids;
}

KMeansResult lloyd(std::span<const double> points, std::vector<double> centroids, std::size_t max_iters) {
  const std::size_t m = centroids.size();
  KMeansResult res;
  res.assignment.assign(points.size(), -1);
  std::vector<std::int32_t> next(points.size());
  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < points.size(); ++i) next[i] = nearest(points[i], centroids);
    const bool changed = next != res.assignment;
    res.assignment = next;
    if (!changed) break;

    std::vector<double> sums(m, 0.0);
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[static_cast<std::size_t>(next[i])] += points[i];
      ++counts[static_cast<std::size_t>(next[i])];
    }
    for (std::size_t k = 0; k < m; ++k) {
      if (counts[k] > 0) {
        centroids[k] = sums[k] / static_cast<double>(counts[k]);
        continue;
      }
      // Empty cluster: move it onto the worst-served point.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = std::abs(points[i] - centroids[static_cast<std::size_t>(next[i])]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centroids[k] = points[far];
    }
    res.inertia_history.push_back(kmeans_inertia(points, centroids, res.assignment));
  }
  res.centroids = std::move(centroids);
  for (std::size_t i = 0; i < points.size(); ++i) res.assignment[i] = nearest(points[i], res.centroids);
  res.inertia = kmeans_inertia(points, res.centroids, res.assignment);
  return res;
}

// Optimal 1-D partition into m contiguous runs of the sorted points
// (divide-and-conquer DP, O(m n log n)). Returns the run means.
std::vector<double> optimal_centroids(std::span<const double> points, std::size_t m) {
  std::vector<double> x(points.begin(), points.end());
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i] - mean;  // centred to limit cancellation
    s1[i + 1] = s1[i] + v;
    s2[i + 1] = s2[i] + v * v;
  }
  auto cost = [&](std::size_t i, std::size_t j) {  // points [i, j)
    const double a = s1[j] - s1[i];
    return std::max(0.0, s2[j] - s2[i] - a * a / static_cast<double>(j - i));
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(n + 1, inf), cur(n + 1, inf);
  std::vector<std::vector<std::size_t>> cut(m, std::vector<std::size_t>(n + 1, 0));
  for (std::size_t j = 1; j <= n; ++j) prev[j] = cost(0, j);
  for (std::size_t k = 1; k < m; ++k) {
    std::fill(cur.begin(), cur.end(), inf);
    auto solve = [&](auto&& self, std::size_t lo, std::size_t hi, std::size_t olo, std::size_t ohi) -> void {
      if (lo > hi) return;
      const std::size_t j = lo + (hi - lo) / 2;
      std::size_t best_i = olo;
      double best = inf;
      for (std::size_t i = olo; i <= std::min(ohi, j - 1); ++i) {
        const double v = prev[i] + cost(i, j);
        if (v < best) {
          best = v;
          best_i = i;
        }
      }
      cur[j] = best;
      cut[k][j] = best_i;
      if (j > lo) self(self, lo, j - 1, olo, best_i);
      self(self, j + 1, hi, best_i, ohi);
    };
    solve(solve, k + 1, n, k, n - 1);
    std::swap(prev, cur);
  }
  std::vector<double> centroids(m);
  std::size_t j = n;
  for (std::size_t k = m; k-- > 0;) {
    const std::size_t i = k == 0 ? 0 : cut[k][j];
    centroids[k] = mean + (s1[j] - s1[i]) / static_cast<double>(j - i);
    j = i;
  }
  return centroids;
}

}  // namespace

double kmeans_inertia(std::span<const double> points, std::span<const double> centroids,
                      std::span<const std::int32_t> assignment) {
  double acc = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = points[i] - centroids[static_cast<std::size_t>(assignment[i])];
    acc += d * d;
  }
  return acc;
}

KMeansResult kmeans_1d(std::span<const double> points, std::size_t m, const KMeansOptions& opts) {
  if (m == 0) throw ContractError("kmeans_1d: m must be positive");
  const std::size_t distinct = std::set<double>(points.begin(), points.end()).size();
  if (m > distinct)
    throw ContractError("kmeans_1d: m = " + std::to_string(m) + " exceeds " + std::to_string(distinct) +
                        " distinct points");
  std::mt19937_64 rng(opts.seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  const std::size_t runs = std::max<std::size_t>(opts.restarts, 1);
  for (std::size_t r = 0; r < runs; ++r) {
    auto run = lloyd(points, seed_plus_plus(points, m, rng), std::max<std::size_t>(opts.max_iters, 1));
    if (run.inertia < best.inertia) best = std::move(run);
  }
  // Lloyd can stall in a local optimum; a run seeded from the exact partition
  // guarantees the global one.
  auto exact = lloyd(points, optimal_centroids(points, m), std::max<std::size_t>(opts.max_iters, 1));
  if (exact.inertia < best.inertia) best = std::move(exact);

  // Canonical order: ascending centroids, assignment relabelled to match.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return best.centroids[a] < best.centroids[b]; });
  std::vector<std::int32_t> relabel(m);
  std::vector<double> sorted(m);
  for (std::size_t k = 0; k < m; ++k) {
    sorted[k] = best.centroids[order[k]];
    relabel[order[k]] = static_cast<std::int32_t>(k);
  }
  best.centroids = std::move(sorted);
  for (auto& a : best.assignment) a = relabel[static_cast<std::size_t>(a)];
  return best;
}

double fake_quant_scale(const Tensor& w, int bits) {
  const double peak =
      std::accumulate(w.values().begin(), w.values().end(), 0.0, [](double a, double v) { return std::max(a, std::abs(v)); });
  return peak / static_cast<double>(max_code(bits));
}

Tensor uniform_fake_quant(const Tensor& w, int bits) {
  if (bits != 2 && bits != 4 && bits != 8) throw ContractError("fake quant bits must be 2, 4 or 8");
  const double q = fake_quant_scale(w, bits);
  if (q == 0.0) return w;
  const double hi = static_cast<double>(max_code(bits));
  Tensor out = w;
  for (auto& v : out.values()) v = q * std::clamp(std::round(v / q), -hi, hi);
  return out;
}

Var uniform_fake_quant(const Var& w, int bits) {
  return w.graph()->record("fake_quant", uniform_fake_quant(w.value(), bits), {w}, [](const Tensor& g, auto gin) {
    if (!gin[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
  });
}

std::vector<std::int8_t> ternary_masks(const Tensor& latent, double threshold_frac) {
  if (!(threshold_frac > 0.0 && threshold_frac < 1.0)) throw ContractError("ternary threshold fraction must lie in (0,1)");
  double peak = 0.0;
  for (double v : latent.values()) peak = std::max(peak, std::abs(v));
  const double delta = threshold_frac * peak;
  std::vector<std::int8_t> mask(latent.size(), 0);
  for (std::size_t i = 0; i < latent.size(); ++i) {
    if (latent[i] > delta) mask[i] = 1;
    else if (latent[i] < -delta) mask[i] = -1;
  }
  return mask;
}

TernaryLayer init_ternary(Tensor latent, double threshold_frac) {
  const auto mask = ternary_masks(latent, threshold_frac);
  double pos = 0.0, neg = 0.0, all = 0.0;
  std::size_t npos = 0, nneg = 0;
  for (std::size_t i = 0; i < latent.size(); ++i) {
    all += std::abs(latent[i]);
    if (mask[i] > 0) {
      pos += latent[i];
      ++npos;
    } else if (mask[i] < 0) {
      neg -= latent[i];
      ++nneg;
    }
  }
  const double fallback = latent.size() ? all / static_cast<double>(latent.size()) : 1.0;
  TernaryLayer layer;
  layer.latent = std::move(latent);
  layer.w_pos = npos ? pos / static_cast<double>(npos) : fallback;
  layer.w_neg = nneg ? neg / static_cast<double>(nneg) : fallback;
  layer.threshold_frac = threshold_frac;
  return layer;
}

Tensor ternary_forward(const TernaryLayer& layer) {
  const auto mask = ternary_masks(layer.latent, layer.threshold_frac);
  Tensor out(layer.latent.shape(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i] > 0) out[i] = layer.w_pos;
    else if (mask[i] < 0) out[i] = -layer.w_neg;
  }
  return out;
}

Var ternary_forward(const Var& latent, const Var& w_pos, const Var& w_neg, double threshold_frac) {
  if (w_pos.size() != 1 || w_neg.size() != 1) throw DimensionError("ternary scales must be scalars");
  auto mask = ternary_masks(latent.value(), threshold_frac);
  const double wp = w_pos.value()[0];
  const double wn = w_neg.value()[0];
  Tensor out(latent.shape(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i] > 0) out[i] = wp;
    else if (mask[i] < 0) out[i] = -wn;
  }
  return latent.graph()->record(
      "ternary", std::move(out), {latent, w_pos, w_neg}, [mask = std::move(mask), wp, wn](const Tensor& g, auto gin) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (mask[i] > 0) {
            if (gin[0]) (*gin[0])[i] += wp * g[i];
            if (gin[1]) (*gin[1])[0] += g[i];
          } else if (mask[i] < 0) {
            if (gin[0]) (*gin[0])[i] += wn * g[i];
            if (gin[2]) (*gin[2])[0] -= g[i];
          } else if (gin[0]) {
            (*gin[0])[i] += g[i];
          }
        }
      });
}

}  // namespace catsnn
