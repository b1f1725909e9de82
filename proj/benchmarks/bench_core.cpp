#include <benchmark/benchmark.h>

#include "bigraph/bgr.hpp"
#include "bigraph/generator.hpp"
#include "bigraph/metrics.hpp"
#include "bigraph/objectives.hpp"
#include "bigraph/ops.hpp"
#include "bigraph/pose_data.hpp"

using namespace bigraph;

namespace {

Tensor<float> randf(Rng& rng, Shape shape, bool rg = false) {
  std::vector<float> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& e : v) e = static_cast<float>(rng.uniform(-1.0, 1.0));
  return Tensor<float>::from_values(std::move(shape), std::move(v), rg);
}

void BM_MatMul(benchmark::State& state) {
  int64_t n = state.range(0);
  Rng rng(1);
  auto a = randf(rng, {n, n});
  auto b = randf(rng, {n, n});
  for (auto _ : state) {
    auto c = matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_MatMul)->Arg(64)->Arg(256);

void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(2);
  auto x = randf(rng, {8, 96, 16, 8});
  auto w = randf(rng, {64, 96, 3, 3});
  for (auto _ : state) {
    auto y = conv2d(x, w, 1, 1);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetItemsProcessed(state.iterations() * 8 * 64 * 16 * 8 * 96 * 9);
}
BENCHMARK(BM_Conv2dForward);

void BM_Conv2dTrain(benchmark::State& state) {
  Rng rng(3);
  auto x = randf(rng, {8, 96, 16, 8}, true);
  auto w = randf(rng, {64, 96, 3, 3}, true);
  for (auto _ : state) {
    x.zero_grad();
    w.zero_grad();
    auto loss = mean_all(conv2d(x, w, 1, 1));
    backward(loss);
    benchmark::DoNotOptimize(w.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * 3 * 8 * 64 * 16 * 8 * 96 * 9);
}
BENCHMARK(BM_Conv2dTrain);

void BM_StemConvTrain(benchmark::State& state) {
  // the 7x7 stem over full-resolution heatmaps dominates the encoders
  Rng rng(4);
  auto x = randf(rng, {8, 18, 64, 32});
  auto w = randf(rng, {16, 18, 7, 7}, true);
  for (auto _ : state) {
    w.zero_grad();
    auto loss = mean_all(conv2d(x, w, 1, 3));
    backward(loss);
    benchmark::DoNotOptimize(w.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * 8 * 16 * 64 * 32 * 18 * 49);
}
BENCHMARK(BM_StemConvTrain);

void BM_BGRForward(benchmark::State& state) {
  Rng rng(5);
  auto block = BGRBlockParams<float>::create(rng, 32, 16, 16, 32, true, true, false);
  auto pa = randf(rng, {8, 32, 16, 8});
  auto pb = randf(rng, {8, 32, 16, 8});
  for (auto _ : state) {
    auto [na, nb] = bgr_forward(pa, pb, block);
    benchmark::DoNotOptimize(na.values().data());
  }
}
BENCHMARK(BM_BGRForward);

void BM_GeneratorForward(benchmark::State& state) {
  Rng rng(6);
  GeneratorConfig cfg;  // smoke-scale generator
  auto gen = GeneratorParams<float>::create(rng, cfg);
  auto ia = randf(rng, {8, 3, 64, 32});
  auto pa = randf(rng, {8, 18, 64, 32});
  auto pb = randf(rng, {8, 18, 64, 32});
  for (auto _ : state) {
    auto out = generator_forward(ia, pa, pb, gen);
    benchmark::DoNotOptimize(out.i_b_prime.values().data());
  }
}
BENCHMARK(BM_GeneratorForward);

void BM_SSIM(benchmark::State& state) {
  Rng rng(7);
  std::vector<double> a(3 * 64 * 32), b(3 * 64 * 32);
  for (auto& v : a) v = rng.uniform();
  for (auto& v : b) v = rng.uniform();
  auto x = Tensor<double>::from_values({3, 64, 32}, std::move(a));
  auto y = Tensor<double>::from_values({3, 64, 32}, std::move(b));
  for (auto _ : state) {
    double s = ssim(x, y);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_SSIM);

void BM_RenderSample(benchmark::State& state) {
  DatasetConfig cfg;
  SyntheticDataset data(cfg);
  int64_t i = 0;
  for (auto _ : state) {
    auto s = data.sample<float>(Split::train, i++);
    benchmark::DoNotOptimize(s.i_b.values().data());
  }
}
BENCHMARK(BM_RenderSample);

}  // namespace

BENCHMARK_MAIN();
