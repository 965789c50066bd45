#include <benchmark/benchmark.h>

#include "sidlab/invariant_density.hpp"
#include "sidlab/potentials.hpp"
#include "sidlab/sde.hpp"

using namespace sidlab;

namespace {

SimConfig cfg_1d(double sigma, int stride) {
  SimConfig c;
  c.sigma = sigma;
  c.dt = 1e-3;
  c.t_end = 1e9;  // the benchmark loop decides how far to step
  c.x0 = {0.5};
  c.master_seed = 7;
  c.decimation_stride = stride;
  return c;
}

void BM_BrownianIncrement(benchmark::State& state) {
  const BrownianSource src(123, static_cast<int>(state.range(0)), 1e-3);
  Vec out(state.range(0));
  std::uint64_t step = 0;
  for (auto _ : state) {
    src.increment(step++, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_BrownianIncrement)->Arg(1)->Arg(2)->Arg(8);

void BM_StepSelfInteractingFastPath(benchmark::State& state) {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  SelfInteractingSimulator sim(V, W, cfg_1d(0.6, static_cast<int>(state.range(0))), 0);
  for (auto _ : state) {
    sim.step();
    benchmark::DoNotOptimize(sim.x().data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_StepSelfInteractingFastPath)->Arg(1)->Arg(64);

void BM_InteractionDriftGeneric(benchmark::State& state) {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::even_poly({0.0}, {{2, 0.5}, {4, 0.25}});
  SelfInteractingSimulator sim(V, W, cfg_1d(0.6, 1), 0);
  for (int i = 0; i < state.range(0); ++i) sim.step();
  Vec out(1);
  for (auto _ : state) {
    interaction_drift(sim.state(), W, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_InteractionDriftGeneric)->Range(256, 16384)->Complexity();

void BM_ApplyPi(benchmark::State& state) {
  const auto V = PotentialSpec::quadratic({0.0}, 1.0);
  const auto W = PotentialSpec::quadratic({0.0}, 1.0);
  const GridSpec grid{-6.0, 6.0, static_cast<int>(state.range(0))};
  const auto mu = GridDensity::uniform(grid);
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_Pi(mu, V, W, 1.0));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ApplyPi)->Arg(512)->Arg(1024)->Arg(2048)->Complexity();

}  // namespace

BENCHMARK_MAIN();
