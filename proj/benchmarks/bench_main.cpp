#include <random>

#include <benchmark/benchmark.h>

#include "catsnn/baselines.hpp"
#include "catsnn/network.hpp"
#include "catsnn/ops.hpp"
#include "catsnn/pipeline.hpp"

using namespace catsnn;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = nd(rng);
  return t;
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_tensor({32, c, 8, 8}, 1), w = random_tensor({2 * c, c, 3, 3}, 2);
  for (auto _ : state) {
    Graph g;
    auto xv = g.leaf(x), wv = g.leaf(w, true);
    g.backward(ops::sum(ops::conv2d(xv, wv, 1, 1)));
    benchmark::DoNotOptimize(g.grad(wv));
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(3)->Arg(16);

void BM_DeskForward(benchmark::State& state) {
  const auto cfg = PipelineConfig::defaults();
  const auto [train, test] = make_dataset(cfg);
  const Model m = initial_model(cfg, train.sample_shape());
  std::vector<std::size_t> idx(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Tensor x = test.batch_images(idx);
  for (auto _ : state) benchmark::DoNotOptimize(predict_logits(m, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DeskForward)->Arg(32)->Arg(256);

void BM_KMeans1d(benchmark::State& state) {
  const Tensor pts = random_tensor({static_cast<std::size_t>(state.range(0))}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kmeans_1d(pts.values(), 4));
}
BENCHMARK(BM_KMeans1d)->Arg(1024)->Arg(16384);

void BM_Saliency(benchmark::State& state) {
  const auto cfg = PipelineConfig::defaults();
  const auto [train, test] = make_dataset(cfg);
  const Model m = initial_model(cfg, train.sample_shape());
  const Dataset calib = calibration_set(train, 1, cfg.batch_size, cfg.seed);
  const auto crit = static_cast<Criterion>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(compute_saliency(m, calib, crit, cfg.batch_size));
  state.SetLabel(to_string(crit));
}
BENCHMARK(BM_Saliency)->Arg(static_cast<int>(Criterion::Fsc))->Arg(static_cast<int>(Criterion::Sca));

}  // namespace
BENCHMARK_MAIN();
