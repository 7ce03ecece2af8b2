#include <benchmark/benchmark.h>

#include <random>

#include "prunebench/flops.hpp"
#include "prunebench/model_zoo.hpp"
#include "prunebench/nn.hpp"
#include "prunebench/pruner.hpp"

using namespace prunebench;

namespace {

Tensor random_batch(const InputSpec& in, std::size_t n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d(0.0f, 1.0f);
  Tensor x({n, in.channels, in.height, in.width});
  for (auto& v : x.data()) v = d(rng);
  return x;
}

ModelGraph model_at(double ratio) {
  ModelGraph m = build_model("resnet14-cifar", InputSpec{3, 16, 16, 10});
  PruneConfig pc;
  pc.ratio = ratio;
  m = prune_architecture(m, pc);
  init_parameters(m, 1);
  return m;
}

void BM_Forward(benchmark::State& state) {
  ModelGraph m = model_at(state.range(0) / 100.0);
  const Tensor x = random_batch(m.input(), 128);
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, x));
  state.counters["MACs/s"] = benchmark::Counter(
      static_cast<double>(count_flops(m).total_macs) * 128, benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(70)->Arg(90)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  ModelGraph m = model_at(state.range(0) / 100.0);
  const Tensor x = random_batch(m.input(), 128);
  std::vector<int> labels(128);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  OptimizerState opt{0.1f, 0.9f, 5e-4f, {}};
  for (auto _ : state) {
    auto lg = backward(m, x, labels);
    sgd_step(m.params(), lg.grads, opt);
  }
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(70)->Arg(90)->Unit(benchmark::kMillisecond);

void BM_PruneRebuild(benchmark::State& state) {
  ModelGraph m = build_model("resnet56-cifar");
  init_parameters(m, 1);
  PruneConfig pc;
  pc.ratio = 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(rebuild_small_dense(m, plan(m, pc)));
}
BENCHMARK(BM_PruneRebuild)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
