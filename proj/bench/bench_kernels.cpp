// Serial references against the OpenMP kernels. Run with
// OMP_NUM_THREADS=N to vary the worker count.

#include <benchmark/benchmark.h>

#include <vector>

#include "sae/kernels.hpp"
#include "sae/landscape.hpp"
#include "sae/rng.hpp"

using namespace sae;

namespace {

std::vector<double> values(std::size_t n, std::uint64_t seed, double zero_rate) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform() < zero_rate ? 0.0 : rng.normal();
  return v;
}

template <void (*Kernel)(std::span<const double>, std::span<const double>, double, std::span<double>)>
void BM_Lambda(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = values(n, 1, 0.5), b = values(n, 2, 0.5);
  std::vector<double> out(n);
  for (auto _ : state) {
    Kernel(a, b, 0.37, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

template <void (*Kernel)(std::span<const double>, std::span<const double>, std::span<double>)>
void BM_Fill(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = values(n, 3, 0.5), b = values(n, 4, 0.0);
  std::vector<double> out(n);
  for (auto _ : state) {
    Kernel(a, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n));
}

template <void (*Kernel)(std::span<const std::span<const double>>, std::span<double>)>
void BM_Mean(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<std::vector<double>> models;
  for (std::uint64_t k = 0; k < 8; ++k) models.push_back(values(n, 10 + k, 0.0));
  std::vector<std::span<const double>> inputs(models.begin(), models.end());
  std::vector<double> out(n);
  for (auto _ : state) {
    Kernel(inputs, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * 8));
}

void BM_ConvexityGrid(benchmark::State& state) {
  const Exec exec = state.range(0) ? Exec::Parallel : Exec::Serial;
  const ModularTaskSpec task{13, ModOp::Add, 1, 0.25};
  const Dataset data = full_split(task, Split::Train);
  const ParameterSet theta = init_mlp(MlpSpec::for_task(13, 32, 2), 1);
  const DirectionPair dirs = random_directions(theta, 2);
  GridSpec grid;
  grid.resolution = 5;
  EigConfig cfg;
  cfg.iters = 20;
  for (auto _ : state) {
    benchmark::DoNotOptimize(convexity_grid(theta, dirs, grid, data, cfg, exec).convexity.data.data());
  }
}

}  // namespace

BENCHMARK(BM_Lambda<kernels::serial::merge_attract>)->Name("merge_attract/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Lambda<kernels::omp::merge_attract>)->Name("merge_attract/omp")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Lambda<kernels::serial::interpolate>)->Name("interpolate/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Lambda<kernels::omp::interpolate>)->Name("interpolate/omp")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Fill<kernels::serial::fill_zeros>)->Name("fill_zeros/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Fill<kernels::omp::fill_zeros>)->Name("fill_zeros/omp")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Mean<kernels::serial::mean>)->Name("mean8/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Mean<kernels::omp::mean>)->Name("mean8/omp")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_ConvexityGrid)->Name("convexity_grid_5x5")->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
