#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "cdvi/model.hpp"
#include "cdvi/rng.hpp"

namespace {

cdvi::SurvivalDataset make_batch(std::size_t n) {
  cdvi::SurvivalDataset ds;
  ds.d_x = 1;
  ds.feature_names = {"x"};
  cdvi::Rng rng(3);
  for (std::size_t i = 0; i < n; ++i) {
    ds.x.push_back(rng.normal(0, 1));
    ds.y.push_back(rng.normal(0, 1));
    ds.event.push_back(i % 3 != 0 ? 1 : 0);
  }
  return ds;
}

void BM_ObjectiveBackward(benchmark::State& state) {
  const auto ds = make_batch(static_cast<std::size_t>(state.range(0)));
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto model = cdvi::CdCvaeModel::make(1, 2, {32, 32}, cdvi::Family::kGaussian, 7);
  cdvi::EstimatorConfig cfg;
  cfg.objective = cdvi::Objective::kElboC;
  cdvi::BatchView batch{&ds, idx};
  cdvi::Rng rng(9);
  std::vector<double> eps(cdvi::eps_count(model, batch, cfg));
  for (auto& v : eps) v = rng.normal();
  for (auto _ : state) {
    model.params.zero_grad();
    benchmark::DoNotOptimize(cdvi::objective_backward(model, batch, cfg, eps));
  }
}
BENCHMARK(BM_ObjectiveBackward)->Arg(20)->Arg(100)->Arg(500);

void BM_ObjectiveBackwardIs(benchmark::State& state) {
  const auto ds = make_batch(100);
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  auto model = cdvi::CdCvaeModel::make(1, 2, {32, 32}, cdvi::Family::kGaussian, 7);
  cdvi::EstimatorConfig cfg;
  cfg.objective = cdvi::Objective::kIs;
  cfg.m = static_cast<int>(state.range(0));
  cfg.k = cfg.m;
  cdvi::BatchView batch{&ds, idx};
  cdvi::Rng rng(9);
  std::vector<double> eps(cdvi::eps_count(model, batch, cfg));
  for (auto& v : eps) v = rng.normal();
  for (auto _ : state) {
    model.params.zero_grad();
    benchmark::DoNotOptimize(cdvi::objective_backward(model, batch, cfg, eps));
  }
}
BENCHMARK(BM_ObjectiveBackwardIs)->Arg(10)->Arg(30);

}  // namespace
