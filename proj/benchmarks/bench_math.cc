#include <benchmark/benchmark.h>

#include <vector>

#include "cdvi/math.hpp"
#include "cdvi/rng.hpp"

namespace {

void BM_LogSumExp(benchmark::State& state) {
  cdvi::Rng rng(1);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (auto& x : v) x = rng.uniform(-50.0, 50.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cdvi::log_sum_exp(v));
  }
}
BENCHMARK(BM_LogSumExp)->Arg(8)->Arg(64)->Arg(1024);

void BM_GaussianLogSurvival(benchmark::State& state) {
  double s = -38.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cdvi::std_normal_log_survival(s));
    s += 0.001;
    if (s > 38.0) s = -38.0;
  }
}
BENCHMARK(BM_GaussianLogSurvival);

void BM_StdNormalHazard(benchmark::State& state) {
  double s = -8.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cdvi::std_normal_hazard(s));
    s += 0.001;
    if (s > 8.0) s = -8.0;
  }
}
BENCHMARK(BM_StdNormalHazard);

}  // namespace
