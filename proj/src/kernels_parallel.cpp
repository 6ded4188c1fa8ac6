#include <atomic>
#include <cstdint>

#include <omp.h>

#include "iotflow/kernels.hpp"
#include "kernels_impl.hpp"

namespace iotflow::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kMinParallelWork = 1 << 15;

bool worth_it(std::size_t work) { return work >= kMinParallelWork && omp_get_max_threads() > 1; }

}  // namespace

namespace parallel {

void matmul(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate) {
  detail::check_matmul(a, b, c);
  const auto m = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for schedule(static) if (worth_it(a.rows * a.cols * b.cols))
  for (std::int64_t i = 0; i < m; ++i) detail::matmul_row(a, b, c, static_cast<std::size_t>(i), accumulate);
}

void matmul_tn(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate) {
  detail::check_matmul_tn(a, b, c);
  const auto k = static_cast<std::int64_t>(a.cols);
#pragma omp parallel for schedule(static) if (worth_it(a.rows * a.cols * b.cols))
  for (std::int64_t p = 0; p < k; ++p) detail::matmul_tn_row(a, b, c, static_cast<std::size_t>(p), accumulate);
}

void matmul_nt(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate) {
  detail::check_matmul_nt(a, b, c);
  const auto m = static_cast<std::int64_t>(a.rows);
#pragma omp parallel for schedule(static) if (worth_it(a.rows * a.cols * b.rows))
  for (std::int64_t i = 0; i < m; ++i) detail::matmul_nt_row(a, b, c, static_cast<std::size_t>(i), accumulate);
}

NeighborLists region_queries(std::span<const double> points, std::size_t dims, double eps) {
  const std::size_t n = detail::point_count(points, dims);
  NeighborLists out(n);
  const auto sn = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 64) if (worth_it(n * n * dims))
  for (std::int64_t i = 0; i < sn; ++i) {
    out[static_cast<std::size_t>(i)] = detail::neighbors_of(points, dims, n, static_cast<std::size_t>(i), eps);
  }
  return out;
}

}  // namespace parallel

void use_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

void matmul(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate) {
  parallel_enabled() ? parallel::matmul(a, b, c, accumulate) : serial::matmul(a, b, c, accumulate);
}
void matmul_tn(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate) {
  parallel_enabled() ? parallel::matmul_tn(a, b, c, accumulate) : serial::matmul_tn(a, b, c, accumulate);
}
void matmul_nt(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate) {
  parallel_enabled() ? parallel::matmul_nt(a, b, c, accumulate) : serial::matmul_nt(a, b, c, accumulate);
}
NeighborLists region_queries(std::span<const double> points, std::size_t dims, double eps) {
  return parallel_enabled() ? parallel::region_queries(points, dims, eps)
                            : serial::region_queries(points, dims, eps);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace iotflow::kernels
