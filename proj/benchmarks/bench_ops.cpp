#include <benchmark/benchmark.h>

#include "pixelstack/ops.hpp"
#include "pixelstack/pixelcnn.hpp"

using namespace pixelstack;

namespace {

Tensor random(const Shape& s, Rng& rng, bool grad = false) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(s, std::move(v), grad);
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto side = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  const Tensor x = random({8, c, side, side}, rng), w = random({c, c, 3, 3}, rng), b = random({c}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b));
  state.counters["flops"] = benchmark::Counter(2.0 * 8 * c * c * 9 * side * side, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto side = static_cast<std::size_t>(state.range(1));
  Rng rng(2);
  const Tensor x = random({8, c, side, side}, rng, true), w = random({c, c, 3, 3}, rng, true), b = random({c}, rng, true);
  for (auto _ : state) {
    backward(mean(conv2d(x, w, b)));
    benchmark::ClobberMemory();
  }
}

void BM_PixelCNNTrainStep(benchmark::State& state) {
  PixelCNNConfig cfg;
  cfg.layers = static_cast<std::size_t>(state.range(0));
  cfg.hidden = 32;
  cfg.bins = 16;
  Rng rng(3);
  AutoregressiveNet net(cfg, rng);
  IntMap x(8, 1, 16, 16);
  for (auto& v : x.values) v = static_cast<std::int32_t>(rng.below(16));
  for (auto _ : state) backward(nll(net.forward(x), x));
}

}  // namespace

BENCHMARK(BM_Conv2dForward)->Args({32, 16})->Args({64, 16})->Args({32, 32})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Conv2dForwardBackward)->Args({32, 16})->Args({32, 32})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_PixelCNNTrainStep)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
