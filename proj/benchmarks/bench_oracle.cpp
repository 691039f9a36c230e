#include <benchmark/benchmark.h>

#include "clutter_vi/model.hpp"
#include "clutter_vi/oracle.hpp"

namespace {

clutter_vi::Dataset bench_data(std::size_t n) {
  const clutter_vi::ClutterModel model;
  return clutter_vi::sample_dataset(model, 2.0, n, 7);
}

void BM_Elbo(benchmark::State& state) {
  const clutter_vi::ClutterModel model;
  const auto data = bench_data(static_cast<std::size_t>(state.range(0)));
  const clutter_vi::VariationalGaussian q{1.8, 0.25};
  for (auto _ : state) {
    benchmark::DoNotOptimize(clutter_vi::elbo(model, data, q));
  }
}
BENCHMARK(BM_Elbo)->Arg(20)->Arg(100);

void BM_ExactGradientQuadrature(benchmark::State& state) {
  const clutter_vi::ClutterModel model;
  const auto data = bench_data(static_cast<std::size_t>(state.range(0)));
  const clutter_vi::VariationalGaussian q{1.8, 0.25};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        clutter_vi::exact_gradient_quadrature(model, data, q));
  }
}
BENCHMARK(BM_ExactGradientQuadrature)->Arg(20)->Arg(100);

void BM_LogMarginalLikelihood(benchmark::State& state) {
  const clutter_vi::ClutterModel model;
  const auto data = bench_data(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(clutter_vi::log_marginal_likelihood(model, data));
  }
}
BENCHMARK(BM_LogMarginalLikelihood)->Arg(20);

}  // namespace
