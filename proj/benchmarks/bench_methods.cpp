#include <benchmark/benchmark.h>

#include "clutter_vi/baselines.hpp"
#include "clutter_vi/em.hpp"
#include "clutter_vi/model.hpp"

namespace {

clutter_vi::Dataset bench_data(std::size_t n) {
  const clutter_vi::ClutterModel model;
  return clutter_vi::sample_dataset(model, 2.0, n, 7);
}

void BM_RunEm(benchmark::State& state) {
  const clutter_vi::ClutterModel model;
  const auto data = bench_data(static_cast<std::size_t>(state.range(0)));
  clutter_vi::EMSettings settings;
  settings.record_diagnostics = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(clutter_vi::run_em(model, data, settings));
  }
}
BENCHMARK(BM_RunEm)->Arg(20)->Arg(100);

void BM_Ep(benchmark::State& state) {
  const clutter_vi::ClutterModel model;
  const auto data = bench_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(clutter_vi::ep(model, data));
  }
}
BENCHMARK(BM_Ep)->Arg(20)->Arg(100);

void BM_MfVi(benchmark::State& state) {
  const clutter_vi::ClutterModel model;
  const auto data = bench_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(clutter_vi::mf_vi(model, data));
  }
}
BENCHMARK(BM_MfVi)->Arg(20)->Arg(100);

void BM_Laplace(benchmark::State& state) {
  const clutter_vi::ClutterModel model;
  const auto data = bench_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(clutter_vi::laplace(model, data));
  }
}
BENCHMARK(BM_Laplace)->Arg(20)->Arg(100);

}  // namespace
