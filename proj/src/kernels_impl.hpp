#pragma once

// Per-row bodies shared by the serial and OpenMP kernels.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "iotflow/kernels.hpp"

namespace iotflow::kernels::detail {

inline void check_matmul(ConstMatrix a, ConstMatrix b, Matrix c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols) {
    throw std::invalid_argument("matmul: incompatible shapes");
  }
}
inline void check_matmul_tn(ConstMatrix a, ConstMatrix b, Matrix c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols) {
    throw std::invalid_argument("matmul_tn: incompatible shapes");
  }
}
inline void check_matmul_nt(ConstMatrix a, ConstMatrix b, Matrix c) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows) {
    throw std::invalid_argument("matmul_nt: incompatible shapes");
  }
}

inline void matmul_row(ConstMatrix a, ConstMatrix b, Matrix c, std::size_t i, bool accumulate) {
  double* __restrict out = c.row(i);
  if (!accumulate) {
    for (std::size_t j = 0; j < c.cols; ++j) out[j] = 0.0;
  }
  const double* arow = a.row(i);
  for (std::size_t p = 0; p < a.cols; ++p) {
    const double s = arow[p];
    if (s == 0.0) continue;
    const double* __restrict brow = b.row(p);
    for (std::size_t j = 0; j < c.cols; ++j) out[j] += s * brow[j];
  }
}

inline void matmul_tn_row(ConstMatrix a, ConstMatrix b, Matrix c, std::size_t p, bool accumulate) {
  double* __restrict out = c.row(p);
  if (!accumulate) {
    for (std::size_t j = 0; j < c.cols; ++j) out[j] = 0.0;
  }
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double s = a.row(i)[p];
    if (s == 0.0) continue;
    const double* __restrict brow = b.row(i);
    for (std::size_t j = 0; j < c.cols; ++j) out[j] += s * brow[j];
  }
}

inline void matmul_nt_row(ConstMatrix a, ConstMatrix b, Matrix c, std::size_t i, bool accumulate) {
  double* out = c.row(i);
  const double* __restrict arow = a.row(i);
  for (std::size_t q = 0; q < b.rows; ++q) {
    const double* __restrict brow = b.row(q);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) s += arow[j] * brow[j];
    out[q] = accumulate ? out[q] + s : s;
  }
}

inline std::size_t point_count(std::span<const double> points, std::size_t dims) {
  if (dims == 0 || points.size() % dims != 0) throw std::invalid_argument("region_queries: bad dims");
  return points.size() / dims;
}

inline std::vector<std::uint32_t> neighbors_of(std::span<const double> points, std::size_t dims,
                                               std::size_t n, std::size_t i, double eps) {
  const double eps2 = eps * eps;
  const double* pi = points.data() + i * dims;
  std::vector<std::uint32_t> out;
  for (std::size_t j = 0; j < n; ++j) {
    const double* pj = points.data() + j * dims;
    double d2 = 0.0;
    for (std::size_t k = 0; k < dims; ++k) {
      const double d = pi[k] - pj[k];
      d2 += d * d;
    }
    if (d2 <= eps2) out.push_back(static_cast<std::uint32_t>(j));
  }
  return out;
}

}  // namespace iotflow::kernels::detail
