#include <benchmark/benchmark.h>

#include "misanthrope/initial.hpp"
#include "misanthrope/meanfield.hpp"
#include "misanthrope/stationary.hpp"

using namespace misanthrope;

static void BM_Rhs(benchmark::State& state) {
  const auto K = static_cast<std::size_t>(state.range(0));
  std::vector<double> f(K + 1, 0.0);
  const auto pois = LevelDistribution::poisson(1.0);
  const auto p = pois.probabilities();
  std::copy(p.begin(), p.end(), f.begin());
  const auto kernel = RateKernel::ecp(1.5, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(rhs(f, kernel));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(K));
}
BENCHMARK(BM_Rhs)->Arg(64)->Arg(4096);

static void BM_IntegrateZrp(benchmark::State& state) {
  const auto pois = LevelDistribution::poisson(1.0);
  const auto f0 = pois.probabilities();
  const auto kernel = RateKernel::zrp(5.0, 1.0);
  SolverConfig cfg;
  cfg.record_distributions = false;
  const std::vector<double> rec{static_cast<double>(state.range(0))};
  for (auto _ : state) benchmark::DoNotOptimize(integrate(f0, kernel, rec.back(), cfg, rec));
}
BENCHMARK(BM_IntegrateZrp)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_StationaryFamily(benchmark::State& state) {
  const auto kernel = RateKernel::zrp(4.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(StationaryFamily::compute(kernel, 4096));
}
BENCHMARK(BM_StationaryFamily)->Unit(benchmark::kMillisecond);
