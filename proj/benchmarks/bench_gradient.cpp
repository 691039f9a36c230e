#include <benchmark/benchmark.h>

#include "clutter_vi/gradient.hpp"
#include "clutter_vi/model.hpp"

namespace {

clutter_vi::Dataset bench_data(std::size_t n) {
  const clutter_vi::ClutterModel model;
  return clutter_vi::sample_dataset(model, 2.0, n, 7);
}

void BM_FactorStats(benchmark::State& state) {
  const clutter_vi::ClutterModel model;
  const auto data = bench_data(static_cast<std::size_t>(state.range(0)));
  const clutter_vi::VariationalGaussian q{1.8, 0.25};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        clutter_vi::compute_factor_stats(model, data, q, model.v_g));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FactorStats)->Arg(20)->Arg(100)->Arg(1000);

void BM_ApproxGradient(benchmark::State& state) {
  const clutter_vi::ClutterModel model;
  const auto data = bench_data(static_cast<std::size_t>(state.range(0)));
  const clutter_vi::VariationalGaussian q{1.8, 0.25};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        clutter_vi::approx_gradient(model, data, q, model.v_g));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ApproxGradient)->Arg(20)->Arg(100)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
