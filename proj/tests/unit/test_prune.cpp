#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "catsnn/dataset.hpp"
#include "catsnn/network.hpp"
#include "catsnn/ops.hpp"
#include "catsnn/prune.hpp"
#include "catsnn/trainer.hpp"

using namespace catsnn;
using namespace catsnn::ops;

namespace {

Model two_conv(std::uint64_t seed) {
  auto arch = Architecture::parse("conv:4:3:1:1,lif,avgpool:2,conv:6:3:1:1,lif,flatten,dense:3", Shape{2, 4, 4});
  return init_model(arch, LifConfig{}, seed, 2.5);
}

Dataset small_data(std::uint64_t seed) {
  SyntheticSpec spec{.classes = 3, .channels = 2, .height = 4, .width = 4, .noise = 0.3, .train_per_class = 8,
                     .test_per_class = 4};
  return make_synthetic(spec, seed).first;
}

ActivityRecord record(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution spike(0.4);
  std::normal_distribution<double> nd(0.0, 0.3);
  ActivityRecord r{Tensor(shape), Tensor(shape)};
  for (std::size_t i = 0; i < r.y.size(); ++i) {
    r.y[i] = spike(rng) ? 1.0 : 0.0;
    (*r.delta)[i] = nd(rng);
  }
  return r;
}

Tensor random_input(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  Tensor x(Shape{n, 2, 4, 4});
  for (auto& v : x.values()) v = u(rng);
  return x;
}

}  // namespace

TEST(Fsc, HandExamples) {
  ActivityRecord r{Tensor(Shape{1, 1, 2}, std::vector<double>{1, 1}), Tensor(Shape{1, 1, 2}, std::vector<double>{0.5, 0.1})};
  auto s = fsc_scores(r);
  EXPECT_DOUBLE_EQ(s.scores[0], 0.25);
  EXPECT_NEAR(s.scores[1], 0.01, 1e-17);
  r.delta->fill(0.0);
  for (double v : fsc_scores(r).scores) EXPECT_EQ(v, 0.0);
  r.delta.reset();
  EXPECT_THROW(fsc_scores(r), StateError);
}

TEST(Fsc, PermutationAndDuplicationInvariance) {
  auto r = record(Shape{5, 3, 4, 2, 2}, 3);
  const auto base = fsc_scores(r).scores;
  const std::size_t per = r.y.size() / 5;
  ActivityRecord perm{Tensor(r.y.shape()), Tensor(r.y.shape())};
  const std::size_t order[] = {3, 0, 4, 1, 2};
  for (std::size_t b = 0; b < 5; ++b)
    for (std::size_t i = 0; i < per; ++i) {
      perm.y[b * per + i] = r.y[order[b] * per + i];
      (*perm.delta)[b * per + i] = (*r.delta)[order[b] * per + i];
    }
  const auto p = fsc_scores(perm).scores;
  FscAccumulator twice;
  twice.add(r);
  twice.add(r);
  const auto d = twice.scores(0).scores;
  for (std::size_t c = 0; c < base.size(); ++c) {
    EXPECT_NEAR(p[c], base[c], 1e-15);
    EXPECT_NEAR(d[c], base[c], 1e-15);
  }
  EXPECT_EQ(twice.samples(), 10u);
  EXPECT_EQ(twice.batches(), 2u);
}

TEST(Fsc, ConstantDeltaIsScaledSca) {
  auto r = record(Shape{4, 3, 5, 2, 2}, 8);
  r.delta->fill(0.7);
  const auto f = fsc_scores(r).scores;
  const auto s = sca_scores(r).scores;
  for (std::size_t c = 0; c < f.size(); ++c) EXPECT_NEAR(f[c], s[c] * 0.49 * 3 * 4, 1e-12);
}

TEST(Sca, Examples) {
  ActivityRecord r{Tensor(Shape{2, 2, 3}, 0.0), std::nullopt};
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 2; ++t) {
      r.y[(b * 2 + t) * 3 + 1] = 1.0;
      r.y[(b * 2 + t) * 3 + 2] = t == 0 ? 1.0 : 0.0;
    }
  EXPECT_EQ(sca_scores(r).scores, (std::vector<double>{0.0, 1.0, 0.5}));
}

TEST(Magnitude, Examples) {
  Tensor w(Shape{2, 2}, std::vector<double>{0, 0, 1, -2});
  EXPECT_EQ(magnitude_scores(w).scores, (std::vector<double>{0, 3}));
  Tensor w2 = w;
  for (auto& v : w2.values()) v *= 2;
  EXPECT_EQ(magnitude_scores(w2).scores, (std::vector<double>{0, 6}));
}

TEST(Oracle, SilentChannelScoresZero) {
  Model m = two_conv(4);
  Tensor& w = m.weights[0].latent;
  const std::size_t per = w.size() / w.dim(0);
  for (std::size_t i = 0; i < per; ++i) w[1 * per + i] = 0.0;
  auto s = oracle_scores(m, small_data(1), 0);
  ASSERT_EQ(s.scores.size(), 4u);
  EXPECT_EQ(s.scores[1], 0.0);
}

TEST(Oracle, DuplicatedChannelsScoreEqually) {
  Model m = two_conv(6);
  Tensor& w0 = m.weights[0].latent;
  const std::size_t per = w0.size() / w0.dim(0);
  for (std::size_t i = 0; i < per; ++i) w0[2 * per + i] = w0[0 * per + i];
  Tensor& w1 = m.weights[1].latent;  // 6 x 4 x 3 x 3
  for (std::size_t o = 0; o < 6; ++o)
    for (std::size_t k = 0; k < 9; ++k) w1[(o * 4 + 2) * 9 + k] = w1[(o * 4 + 0) * 9 + k];
  auto s = oracle_scores(m, small_data(2), 0);
  EXPECT_NEAR(s.scores[0], s.scores[2], 1e-12);
}

TEST(SelectVictims, CountsAndTies) {
  EXPECT_EQ(select_victims({0.4, 0.1, 0.3, 0.2}, 0.3), (std::vector<std::size_t>{1}));
  EXPECT_TRUE(select_victims({0.4, 0.1}, 0.0).empty());
  EXPECT_EQ(select_victims({1, 1, 1, 1}, 0.5), (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(select_victims({1, 2}, 1.0), ContractError);
  EXPECT_THROW(select_victims({1, 2}, -0.1), ContractError);
}

TEST(PruneChannels, RatioZeroIsIdentity) {
  Model m = two_conv(2);
  std::vector<ChannelSaliency> sal{{0, {1, 2, 3, 4}}, {1, {1, 2, 3, 4, 5, 6}}};
  auto res = prune_channels(m, sal, 0.0);
  for (std::size_t k = 0; k < m.weights.size(); ++k) EXPECT_EQ(res.model.weights[k].latent, m.weights[k].latent);
  EXPECT_EQ(res.report.params_after, res.report.params_before);
}

TEST(PruneChannels, ShrinksLayersAndMatchesMaskedModel) {
  Model m = two_conv(9);
  std::vector<ChannelSaliency> sal{{0, {0.5, 0.1, 0.9, 0.3}}, {1, {0.2, 0.8, 0.05, 0.4, 0.6, 0.7}}};
  auto res = prune_channels(m, sal, 0.3);
  EXPECT_EQ(res.report.layers[0].removed, (std::vector<std::size_t>{1}));
  EXPECT_EQ(res.report.layers[1].removed, (std::vector<std::size_t>{2}));
  EXPECT_EQ(res.model.weights[0].latent.shape(), (Shape{3, 2, 3, 3}));
  EXPECT_EQ(res.model.weights[1].latent.shape(), (Shape{5, 3, 3, 3}));
  EXPECT_EQ(res.model.weights[2].latent.shape(), (Shape{3, 5 * 2 * 2}));
  EXPECT_LT(res.report.params_after, res.report.params_before);
  EXPECT_EQ(res.report.params_after, res.model.parameter_count());

  const auto masks = removal_masks(m, res.report);
  const Tensor x = random_input(20, 1);
  const Tensor a = predict_logits(res.model, x);
  const Tensor b = predict_logits(m, x, &masks);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(PruneChannels, Errors) {
  Model m = two_conv(1);
  std::vector<ChannelSaliency> bad{{0, {1, 2, 3}}, {1, {1, 2, 3, 4, 5, 6}}};
  EXPECT_THROW(prune_channels(m, bad, 0.3), StateError);
  std::vector<ChannelSaliency> ok{{0, {1, 2, 3, 4}}, {1, {1, 2, 3, 4, 5, 6}}};
  EXPECT_THROW(prune_channels(m, ok, 1.0), ContractError);
}

TEST(PruneChannels, CatAssignmentsRederived) {
  Model m = two_conv(12);
  for (auto& w : m.weights) {
    Codebook cb{.levels = {-0.5, -0.1, 0.1, 0.5}};
    w.payload = CatPayload{cb, assign(w.latent, cb.levels).index};
  }
  std::vector<ChannelSaliency> sal{{0, {0.5, 0.1, 0.9, 0.3}}, {1, {0.2, 0.8, 0.05, 0.4, 0.6, 0.7}}};
  auto res = prune_channels(m, sal, 0.3);
  for (const auto& w : res.model.weights) {
    const auto& cat = std::get<CatPayload>(w.payload);
    EXPECT_EQ(cat.assignment, assign(w.latent, cat.codebook.levels).index);
    EXPECT_LE(unique_weight_count(w), 4u);
  }
}

TEST(Saliency, GateGradientEqualsDeltaTimesSpikes) {
  Model m = two_conv(3);
  const Tensor x = random_input(6, 2);
  const std::vector<int> labels{0, 1, 2, 0, 1, 2};
  Graph g;
  auto bind = bind_weights_const(g, m);
  std::vector<Var> gates{g.leaf(Tensor(Shape{4}, 1.0), true), g.leaf(Tensor(Shape{6}, 1.0), true)};
  auto tr = forward(g, m, bind.effective, x, {.record_activity = true, .gates = &gates});
  g.backward(softmax_cross_entropy(tr.logits, labels));
  auto acts = collect_activity(g, tr, true);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& y = acts[l].y;
    const auto& d = *acts[l].delta;
    const std::size_t n = y.dim(0), t = y.dim(1), c = y.dim(2), inner = y.size() / (n * t * c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n * t; ++b)
        for (std::size_t i = 0; i < inner; ++i) s += d[(b * c + ch) * inner + i] * y[(b * c + ch) * inner + i];
      EXPECT_NEAR((*g.grad(gates[l]))[ch], s, 1e-12);
    }
  }
}

TEST(Saliency, ComputeForEveryCriterion) {
  Model m = two_conv(5);
  const Dataset calib = small_data(3);
  for (auto c : {Criterion::Fsc, Criterion::Sca, Criterion::Magnitude, Criterion::Oracle}) {
    auto sal = compute_saliency(m, calib, c, 8);
    ASSERT_EQ(sal.size(), 2u) << to_string(c);
    EXPECT_EQ(sal[0].scores.size(), 4u);
    EXPECT_EQ(sal[1].scores.size(), 6u);
    EXPECT_EQ(sal[0].criterion, c);
    EXPECT_EQ(parse_criterion(to_string(c)), c);
  }
  EXPECT_THROW(parse_criterion("svs"), ParseError);
}

TEST(CalibrationSet, SizeAndDeterminism) {
  const Dataset train = small_data(4);
  auto a = calibration_set(train, 2, 5, 11);
  auto b = calibration_set(train, 2, 5, 11);
  EXPECT_EQ(a.size(), 10u);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.images, b.images);
}

TEST(Spearman, Basics) {
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-15);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_EQ(spearman({1, 1, 1}, {1, 2, 3}), 0.0);
  // average ranks: a = {1, 2.5, 2.5, 4}
  EXPECT_NEAR(spearman({1, 2, 2, 3}, {1, 2, 3, 4}), 0.9486832980505138, 1e-12);
}

TEST(PruneReport, CsvHeader) {
  Model m = two_conv(2);
  std::vector<ChannelSaliency> sal{{0, {1, 2, 3, 4}}, {1, {1, 2, 3, 4, 5, 6}}};
  auto res = prune_channels(m, sal, 0.5);
  const auto csv = res.report.to_csv();
  EXPECT_EQ(csv.rfind("layer,criterion,channel,score,status\n", 0), 0u);
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  EXPECT_EQ(lines, 1u + 4 + 6);
}
