#include <benchmark/benchmark.h>

#include <numeric>

#include "cdvi/inference.hpp"
#include "cdvi/metrics.hpp"
#include "cdvi/simulator.hpp"

namespace {

void BM_GibbsSimulate(benchmark::State& state) {
  cdvi::SimConfig cfg = cdvi::sim_preset("sd4", static_cast<int>(state.range(0)), 1);
  cfg.burn_in = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cdvi::gibbs_simulate(cfg));
  }
}
BENCHMARK(BM_GibbsSimulate)->Arg(1000)->Arg(10000);

void BM_CIndex(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  cdvi::Rng rng(5);
  std::vector<double> t(n), s(n);
  std::vector<int> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = rng.uniform(0, 10);
    s[i] = rng.uniform();
    d[i] = rng.uniform() < 0.7 ? 1 : 0;
  }
  d[0] = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cdvi::c_index(s, t, d));
  }
}
BENCHMARK(BM_CIndex)->Arg(200)->Arg(1000);

void BM_EstimateLoglik(benchmark::State& state) {
  const cdvi::ConjugateToyModel toy;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        cdvi::estimate_loglik(toy, {}, 0.0, 1, static_cast<int>(state.range(0)), 3));
  }
}
BENCHMARK(BM_EstimateLoglik)->Arg(1000)->Arg(10000);

}  // namespace
