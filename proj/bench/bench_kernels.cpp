// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS set to the
// core count; on a single core the two should be within noise of each other.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "iotflow/forecast.hpp"
#include "iotflow/kernels.hpp"

using namespace iotflow;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void bm_matmul(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * k, 1);
  const auto b = random_values(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::matmul(kernels::view(a, m, k), kernels::view(b, k, n), kernels::view(std::span<double>(c), m, n), false);
    } else {
      kernels::serial::matmul(kernels::view(a, m, k), kernels::view(b, k, n), kernels::view(std::span<double>(c), m, n), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

template <bool Parallel>
void bm_matmul_tn(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * k, 3);
  const auto b = random_values(m * n, 4);
  std::vector<double> c(k * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::matmul_tn(kernels::view(a, m, k), kernels::view(b, m, n), kernels::view(std::span<double>(c), k, n), false);
    } else {
      kernels::serial::matmul_tn(kernels::view(a, m, k), kernels::view(b, m, n), kernels::view(std::span<double>(c), k, n), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * k * n));
}

template <bool Parallel>
void bm_region_queries(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto points = random_values(n * 3, 5);
  for (auto _ : state) {
    auto lists = Parallel ? kernels::parallel::region_queries(points, 3, 0.2)
                          : kernels::serial::region_queries(points, 3, 0.2);
    benchmark::DoNotOptimize(lists.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n));
}

// One forward+backward pass of the forecasting stack on a batch of 16.
template <bool Parallel>
void bm_train_step(benchmark::State& state) {
  kernels::use_parallel(Parallel);
  const auto arch = static_cast<forecast::Architecture>(state.range(0));
  nn::Network net = forecast::build(arch, 1);
  const nn::Tensor x({16, kInputHours, 1}, random_values(16 * kInputHours, 6));
  const nn::Tensor y({16, kHorizonHours}, random_values(16 * kHorizonHours, 7));
  nn::FitOptions fit;
  fit.epochs = 1;
  fit.batch_size = 16;
  for (auto _ : state) {
    auto h = nn::fit(net, x, y, fit);
    benchmark::DoNotOptimize(h.data());
  }
  kernels::use_parallel(true);
  state.SetLabel(forecast::to_string(arch));
}

}  // namespace

BENCHMARK(bm_matmul<false>)->Args({16, 3904, 168})->Args({502, 3, 64})->Args({16, 32, 128});
BENCHMARK(bm_matmul<true>)->Args({16, 3904, 168})->Args({502, 3, 64})->Args({16, 32, 128});
BENCHMARK(bm_matmul_tn<false>)->Args({16, 3904, 168})->Args({502, 192, 64});
BENCHMARK(bm_matmul_tn<true>)->Args({16, 3904, 168})->Args({502, 192, 64});
BENCHMARK(bm_region_queries<false>)->Arg(1000)->Arg(4000);
BENCHMARK(bm_region_queries<true>)->Arg(1000)->Arg(4000);
BENCHMARK(bm_train_step<false>)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_train_step<true>)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
