#include <benchmark/benchmark.h>

#include "misanthrope/initial.hpp"
#include "misanthrope/simulation.hpp"

using namespace misanthrope;

namespace {

void run_steps(benchmark::State& state, const RateKernel& kernel) {
  const auto L = static_cast<std::size_t>(state.range(0));
  Simulation sim(multinomial_sample(L, static_cast<Level>(L), 1), kernel, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sim.step());
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_StepZrp(benchmark::State& state) { run_steps(state, RateKernel::zrp(4.0, 1.0)); }
void BM_StepInclusion(benchmark::State& state) { run_steps(state, RateKernel::inclusion(1.0)); }
void BM_StepEcp(benchmark::State& state) { run_steps(state, RateKernel::ecp(1.5, 1.0)); }
void BM_StepTable(benchmark::State& state) {
  const Level cap = state.range(0);
  std::vector<double> rates((cap + 1) * (cap + 1));
  for (Level k = 0; k <= cap; ++k)
    for (Level l = 0; l <= cap; ++l) rates[k * (cap + 1) + l] = k == 0 ? 0.0 : k * (1.0 + l) + (l % 2);
  run_steps(state, RateKernel::table(std::move(rates), cap));
}

}  // namespace

BENCHMARK(BM_StepZrp)->Arg(1000)->Arg(100000);
BENCHMARK(BM_StepInclusion)->Arg(1000)->Arg(100000);
BENCHMARK(BM_StepEcp)->Arg(1000)->Arg(100000);
BENCHMARK(BM_StepTable)->Arg(200)->Arg(1000);
