#include <benchmark/benchmark.h>

#include "dmml/surrogate.hpp"

using namespace dmml;

namespace {

PairSet batch(int dim, int n) {
  PairSet p;
  p.inputs = Matrix::Random(2 * dim, n);
  p.targets = Matrix::Random(dim, n);
  p.sample.assign(n, 0);
  p.step.assign(n, 1);
  p.label.assign(n, Label::simulation);
  return p;
}

Mlp network(int dim) {
  std::vector<int> dims{2 * dim};
  dims.insert(dims.end(), 6, 256);
  dims.push_back(dim);
  Mlp net(dims, 0.01);
  net.initialize(1);
  return net;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
  const Mlp net = network(108);
  const PairSet p = batch(108, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(p.inputs));
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(32);

static void BM_Backward(benchmark::State& state) {
  const Mlp net = network(108);
  const PairSet p = batch(108, 32);
  const TrainConfig c;
  for (auto _ : state) benchmark::DoNotOptimize(backward(net, p, c));
}
BENCHMARK(BM_Backward);

static void BM_AdamaxStep(benchmark::State& state) {
  Mlp net = network(108);
  const Gradient g = backward(net, batch(108, 32), TrainConfig{});
  AdaMaxState s(net);
  long t = 0;
  for (auto _ : state) adamax_step(s, net, g, TrainConfig{}, ++t);
}
BENCHMARK(BM_AdamaxStep);
BENCHMARK_MAIN();
