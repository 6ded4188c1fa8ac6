#include <stdexcept>

#include "iotflow/kernels.hpp"
#include "kernels_impl.hpp"

namespace iotflow::kernels::serial {

void matmul(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate) {
  detail::check_matmul(a, b, c);
  for (std::size_t i = 0; i < a.rows; ++i) detail::matmul_row(a, b, c, i, accumulate);
}

void matmul_tn(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate) {
  detail::check_matmul_tn(a, b, c);
  for (std::size_t p = 0; p < a.cols; ++p) detail::matmul_tn_row(a, b, c, p, accumulate);
}

void matmul_nt(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate) {
  detail::check_matmul_nt(a, b, c);
  for (std::size_t i = 0; i < a.rows; ++i) detail::matmul_nt_row(a, b, c, i, accumulate);
}

NeighborLists region_queries(std::span<const double> points, std::size_t dims, double eps) {
  const std::size_t n = detail::point_count(points, dims);
  NeighborLists out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = detail::neighbors_of(points, dims, n, i, eps);
  return out;
}

}  // namespace iotflow::kernels::serial
