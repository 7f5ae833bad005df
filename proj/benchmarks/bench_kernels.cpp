#include <benchmark/benchmark.h>

#include <cmath>

#include "cvnn/ctensor.hpp"
#include "cvnn/rng.hpp"
#include "cvnn/signals.hpp"

using namespace cvnn;

namespace {

CTensor noise(const Shape& s, std::uint64_t seed) {
  CounterRng rng(seed);
  CTensor t(s);
  for (auto& v : t.data()) v = cplx(rng.normal(), rng.normal());
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const CTensor a = noise(Shape{n, n}, 1), b = noise(Shape{n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  // 4 real multiplies and 4 adds per complex multiply-accumulate
  state.counters["flops"] = benchmark::Counter(8.0 * double(n * n * n), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

void BM_Conv2d(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  const CTensor x = noise(Shape{hw, hw, 4}, 3), k = noise(Shape{3, 3, 4, 8}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, {1, 1}, Padding::same));
}
BENCHMARK(BM_Conv2d)->Arg(16)->Arg(32)->Arg(64);

void BM_Elementwise(benchmark::State& state) {
  const CTensor a = noise(Shape{std::size_t(state.range(0))}, 5), b = noise(Shape{std::size_t(state.range(0))}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(a * conj(b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Elementwise)->Arg(1 << 12)->Arg(1 << 16);

void BM_Hilbert(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> x(n);
  CounterRng rng(7);
  for (auto& v : x) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(hilbert_analytic(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Hilbert)->Arg(256)->Arg(1024)->Arg(4096);

void BM_BuildDataset(benchmark::State& state) {
  DatasetSpec spec;
  spec.n_per_class = 50;
  for (auto _ : state) benchmark::DoNotOptimize(build_dataset(spec));
  state.SetItemsProcessed(state.iterations() * 350);
}
BENCHMARK(BM_BuildDataset)->Unit(benchmark::kMillisecond);

}  // namespace
