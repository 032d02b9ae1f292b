#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "catsnn/baselines.hpp"
#include "catsnn/cat.hpp"
#include "catsnn/ops.hpp"

using namespace catsnn;
using namespace catsnn::ops;

namespace {

// Best inertia over every assignment of points to m non-empty clusters.
double brute_force_inertia(const std::vector<double>& pts, std::size_t m) {
  const std::size_t n = pts.size();
  std::vector<std::size_t> lab(n, 0);
  double best = std::numeric_limits<double>::infinity();
  while (true) {
    std::vector<double> s(m, 0.0), c(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      s[lab[i]] += pts[i];
      c[lab[i]] += 1;
    }
    bool full = true;
    for (std::size_t k = 0; k < m; ++k) full = full && c[k] > 0;
    if (full) {
      double in = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = pts[i] - s[lab[i]] / c[lab[i]];
        in += d * d;
      }
      best = std::min(best, in);
    }
    std::size_t i = 0;
    while (i < n && ++lab[i] == m) lab[i++] = 0;
    if (i == n) break;
  }
  return best;
}

}  // namespace

TEST(KMeans, TwoSeparatedPairs) {
  const std::vector<double> pts{0, 1, 10, 11};
  auto r = kmeans_1d(pts, 2);
  std::vector<double> c = r.centroids;
  std::sort(c.begin(), c.end());
  EXPECT_DOUBLE_EQ(c[0], 0.5);
  EXPECT_DOUBLE_EQ(c[1], 10.5);
  EXPECT_NEAR(r.inertia, brute_force_inertia(pts, 2), 1e-12);
}

TEST(KMeans, DegenerateCases) {
  const std::vector<double> pts{3, -1, 7};
  auto all = kmeans_1d(pts, 3);
  EXPECT_NEAR(all.inertia, 0.0, 1e-15);
  std::vector<double> c = all.centroids;
  std::sort(c.begin(), c.end());
  EXPECT_EQ(c, (std::vector<double>{-1, 3, 7}));
  auto one = kmeans_1d(pts, 1);
  EXPECT_DOUBLE_EQ(one.centroids[0], 3.0);
  EXPECT_THROW(kmeans_1d(std::vector<double>{1, 1, 2}, 3), ContractError);
}

TEST(KMeans, MatchesExhaustiveSearch) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> nd(0.0, 2.0);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 4 + std::size_t(trial % 5);
    std::vector<double> pts(n);
    for (auto& p : pts) p = nd(rng);
    for (std::size_t m = 1; m <= 3; ++m) {
      auto r = kmeans_1d(pts, m, {.seed = std::uint64_t(trial)});
      EXPECT_NEAR(r.inertia, brute_force_inertia(pts, m), 1e-9) << "trial " << trial << " m " << m;
      EXPECT_NEAR(kmeans_inertia(pts, r.centroids, r.assignment), r.inertia, 1e-12);
    }
  }
}

TEST(KMeans, DeterministicAndMonotone) {
  std::vector<double> pts(50);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = std::sin(1.7 * double(i)) + 0.1 * double(i % 7);
  auto a = kmeans_1d(pts, 4, {.seed = 5});
  auto b = kmeans_1d(pts, 4, {.seed = 5});
  EXPECT_EQ(a.centroids, b.centroids);
  EXPECT_EQ(a.assignment, b.assignment);
  for (std::size_t i = 1; i < a.inertia_history.size(); ++i)
    EXPECT_LE(a.inertia_history[i], a.inertia_history[i - 1] + 1e-12);
}

TEST(FakeQuant, Examples) {
  Tensor w = Tensor::from({0.5, -1.0});
  EXPECT_DOUBLE_EQ(fake_quant_scale(w, 8), 1.0 / 127);
  auto q = uniform_fake_quant(w, 8);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_LE(std::abs(q[i] - w[i]), 0.5 / 127 + 1e-15);
  EXPECT_EQ(uniform_fake_quant(q, 8), q);
  Tensor t = Tensor::from({0.9, -0.8, 0.1});
  auto q2 = uniform_fake_quant(t, 2);
  for (double v : q2.values()) EXPECT_TRUE(v == 0.9 || v == -0.9 || v == 0.0) << v;
  Tensor zero(Shape{3}, 0.0);
  EXPECT_EQ(uniform_fake_quant(zero, 4), zero);
  EXPECT_THROW(uniform_fake_quant(t, 3), ContractError);
}

TEST(FakeQuant, StraightThroughBackward) {
  Graph g;
  auto w = g.leaf(Tensor::from({0.33, -0.71}), true);
  g.backward(sum(scale(uniform_fake_quant(w, 4), 3.0)));
  EXPECT_EQ(g.grad(w)->values(), (std::vector<double>{3.0, 3.0}));
}

TEST(Ternary, MasksAndForward) {
  Tensor lat = Tensor::from({0.9, -0.8, 0.01});
  EXPECT_EQ(ternary_masks(lat, 0.05), (std::vector<std::int8_t>{1, -1, 0}));
  auto layer = init_ternary(lat, 0.05);
  auto w = ternary_forward(layer);
  EXPECT_DOUBLE_EQ(w[0], layer.w_pos);
  EXPECT_DOUBLE_EQ(w[1], -layer.w_neg);
  EXPECT_DOUBLE_EQ(w[2], 0.0);
  EXPECT_LE(count_unique(w.values()), 3u);
  EXPECT_THROW(ternary_masks(lat, 1.0), ContractError);
}

TEST(Ternary, AllBelowThresholdIsZero) {
  // Delta = frac * max|latent| < max|latent| unless the latent is all zero.
  TernaryLayer layer;
  layer.latent = Tensor(Shape{4}, 0.0);
  EXPECT_EQ(ternary_forward(layer), Tensor(Shape{4}, 0.0));
}

TEST(Ternary, BackwardRules) {
  Graph g;
  auto lat = g.leaf(Tensor::from({0.9, -0.8, 0.01, 0.7}), true);
  auto wp = g.leaf(Tensor::from({1.5}), true);
  auto wn = g.leaf(Tensor::from({2.0}), true);
  auto up = g.leaf(Tensor::from({1.0, 3.0, 5.0, 7.0}));
  g.backward(sum(mul(ternary_forward(lat, wp, wn, 0.05), up)));
  EXPECT_DOUBLE_EQ(g.grad(wp)->item(), 1.0 + 7.0);
  EXPECT_DOUBLE_EQ(g.grad(wn)->item(), -3.0);  // effective weight is -w_neg
  EXPECT_EQ(g.grad(lat)->values(), (std::vector<double>{1.5, 6.0, 5.0, 10.5}));
}
