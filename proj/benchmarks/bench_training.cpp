#include <benchmark/benchmark.h>

#include "cvnn/layers.hpp"
#include "cvnn/model.hpp"
#include "cvnn/train.hpp"

using namespace cvnn;

namespace {

CTensor noise(const Shape& s, std::uint64_t seed) {
  CounterRng rng(seed);
  CTensor t(s);
  for (auto& v : t.data()) v = cplx(rng.normal(), rng.normal());
  return t;
}

void BM_DenseForward(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  Dense d(width, {"cart_selu", {}});
  d.build(Shape{256}, 1);
  const CTensor x = noise(Shape{100, 256}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(d.forward(x, true));
}
BENCHMARK(BM_DenseForward)->Arg(16)->Arg(64)->Arg(128);

void BM_DenseBackward(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  Dense d(width, {"cart_selu", {}});
  d.build(Shape{256}, 1);
  const CTensor x = noise(Shape{100, 256}, 2), g = noise(Shape{100, width}, 3);
  (void)d.forward(x, true);
  for (auto _ : state) benchmark::DoNotOptimize(d.backward(g));
}
BENCHMARK(BM_DenseBackward)->Arg(16)->Arg(64)->Arg(128);

Model mlp(DType dtype) {
  std::vector<std::unique_ptr<Layer>> ls;
  ls.push_back(std::make_unique<Dense>(25, ActivationSpec{"cart_selu", {}}));
  ls.push_back(std::make_unique<Dropout>(0.5));
  ls.push_back(std::make_unique<Dense>(10, ActivationSpec{"cart_selu", {}}));
  ls.push_back(std::make_unique<Dropout>(0.5));
  ls.push_back(std::make_unique<Dense>(2, ActivationSpec{"softmax_real_with_abs", {}}));
  Model m(Shape{256}, std::move(ls), LossSpec{LossKind::cce_real}, DType::complex, 1);
  return dtype == DType::real ? m.get_real_equivalent(2.0) : m;
}

// One SGD step on a batch of 100 for the complex MLP and its real equivalent.
void BM_SgdStep(benchmark::State& state) {
  Model m = mlp(state.range(0) ? DType::real : DType::complex);
  const CTensor x = noise(Shape{100, 256}, 4);
  std::vector<std::uint8_t> labels(100);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = std::uint8_t(i % 2);
  const CTensor t = one_hot(labels, 2);
  for (auto _ : state) benchmark::DoNotOptimize(sgd_step(m, x, t, 1e-4));
  state.SetLabel(state.range(0) ? "real" : "complex");
}
BENCHMARK(BM_SgdStep)->Arg(0)->Arg(1);

}  // namespace
