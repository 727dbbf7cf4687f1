#include <benchmark/benchmark.h>

#include "isofed/ops.h"
#include "isofed/rng.h"

using namespace isofed;

namespace {

Tensor random(Shape shape, CounterRng& rng, bool grad = false) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v), grad);
}

// First conv layer of the default classifier: 1 -> 8 channels on 28x28.
void BM_Conv2dForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  CounterRng rng(1);
  Tensor x = random({batch, 1, 28, 28}, rng);
  Tensor k = random({8, 1, 5, 5}, rng);
  Tensor b = random({8}, rng);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, k, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch));
}
BENCHMARK(BM_Conv2dForward)->Arg(1)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  CounterRng rng(2);
  Tensor x = random({batch, 8, 12, 12}, rng, true);
  Tensor k = random({16, 8, 5, 5}, rng, true);
  Tensor b = random({16}, rng, true);
  for (auto _ : state) {
    Tape tape;
    GradTape rec(tape);
    tape.backward(ops::sum(ops::conv2d(x, k, b)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(batch));
}
BENCHMARK(BM_Conv2dBackward)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_LinearForwardBackward(benchmark::State& state) {
  CounterRng rng(3);
  Tensor x = random({64, 1024}, rng, true);
  Tensor w = random({1024, 128}, rng, true);
  Tensor b = random({128}, rng, true);
  for (auto _ : state) {
    Tape tape;
    GradTape rec(tape);
    tape.backward(ops::sum(ops::linear(x, w, b)));
  }
}
BENCHMARK(BM_LinearForwardBackward)->Unit(benchmark::kMicrosecond);

}  // namespace
