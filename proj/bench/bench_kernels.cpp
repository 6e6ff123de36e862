// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include "ssmel/generators.hpp"
#include "ssmel/mean_blocks.hpp"
#include "ssmel/solver.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace ssmel;

namespace {

struct Fixture {
  SimulatedData sim;
  SplitPlan plan;
  ParamVector theta;
};

const Fixture& bivariate_fixture(Index n, Index K) {
  static Fixture f = [&] {
    Fixture out{gen_bivariate(n, 7), make_split(n, K, 11), {}};
    out.theta = out.sim.truth;
    return out;
  }();
  return f;
}

void BM_mean_blocks_serial(benchmark::State& state) {
  const auto& f = bivariate_fixture(200000, 100);
  const BivariateNormalModel model;
  for (auto _ : state) benchmark::DoNotOptimize(compute_mean_blocks_serial(model, f.sim.data, f.plan, f.theta, true));
  state.SetItemsProcessed(state.iterations() * f.sim.data.size());
}

void BM_mean_blocks_omp(benchmark::State& state) {
  const auto& f = bivariate_fixture(200000, 100);
  const BivariateNormalModel model;
#ifdef _OPENMP
  omp_set_num_threads(static_cast<int>(state.range(0)));
#endif
  for (auto _ : state) benchmark::DoNotOptimize(compute_mean_blocks(model, f.sim.data, f.plan, f.theta, true));
  state.SetItemsProcessed(state.iterations() * f.sim.data.size());
}

// DEL subset fits run in parallel; one thread is the serial reference.
void BM_fit_del(benchmark::State& state) {
  const auto sim = gen_normal(20000, 3);
  const NormalModel model;
#ifdef _OPENMP
  omp_set_num_threads(static_cast<int>(state.range(0)));
#endif
  for (auto _ : state) benchmark::DoNotOptimize(fit_del(model, sim.data, 20, SolverConfig{}, 5));
}

void BM_fit_ssmel_bivariate(benchmark::State& state) {
  const auto sim = gen_bivariate(10000, 3);
  const BivariateNormalModel model;
  for (auto _ : state) benchmark::DoNotOptimize(fit_ssmel(model, sim.data, state.range(0), SolverConfig{}, 5));
}

}  // namespace

BENCHMARK(BM_mean_blocks_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_mean_blocks_omp)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_fit_del)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_fit_ssmel_bivariate)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
