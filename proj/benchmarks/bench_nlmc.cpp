#include <benchmark/benchmark.h>

#include "dmml/fine_solver.hpp"
#include "dmml/nlmc.hpp"

using namespace dmml;

namespace {

const Geometry& geometry() {
  static const Geometry g = [] {
    GeometrySpec spec;
    spec.network.fractures = {{0.05, 0.15, 0.65, 0.15, 0.01, 1000.0}, {0.55, 0.35, 0.55, 0.95, 0.01, 1000.0}};
    return build_geometry(spec);
  }();
  return g;
}

}  // namespace

static void BM_Stiffness(benchmark::State& state) {
  const MobilityField mob(30.0, 0.1, {0.05, 0.05});
  for (auto _ : state) benchmark::DoNotOptimize(assemble_stiffness(geometry(), mob, 0.005));
}
BENCHMARK(BM_Stiffness)->Unit(benchmark::kMillisecond);

static void BM_BasisSet(benchmark::State& state) {
  const SparseMatrix a = assemble_stiffness(geometry(), MobilityField{}, 0.0);
  for (auto _ : state) benchmark::DoNotOptimize(build_basis_set(geometry(), a, 0.0, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_BasisSet)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

static void BM_CoarseStep(benchmark::State& state) {
  const CoarseModel model(geometry(), MobilityField{}, 2, 0.001, 10);
  const Vector u = Vector::Ones(model.size());
  const Vector b = model.load(SourceField::uniform(1.0), 0);
  for (auto _ : state) benchmark::DoNotOptimize(model.step(u, b, 0));
}
BENCHMARK(BM_CoarseStep)->Unit(benchmark::kMicrosecond);

static void BM_FineStep(benchmark::State& state) {
  FineSolver solver(geometry(), MobilityField{}, 0.001);
  const Vector u = Vector::Zero(geometry().fine.vertex_count());
  for (auto _ : state) benchmark::DoNotOptimize(solver.step(u, SourceField::uniform(1.0), 0));
}
BENCHMARK(BM_FineStep)->Unit(benchmark::kMillisecond);
