#pragma once

// Dense linear-algebra and neighborhood kernels. Each kernel has a serial
// reference and an OpenMP version. The parallel versions split work over
// output rows only and keep the reduction order of every output element, so
// both produce bit-identical results; the tests assert exact equality.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace iotflow::kernels {

/// Row-major matrix view. `stride` is the distance between row starts and may
/// be smaller than `cols` (overlapping rows, e.g. sliding convolution windows).
struct ConstMatrix {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;

  const double* row(std::size_t i) const { return data + i * stride; }
};

struct Matrix {
  double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 0;

  double* row(std::size_t i) const { return data + i * stride; }
  operator ConstMatrix() const { return {data, rows, cols, stride}; }
};

inline ConstMatrix view(std::span<const double> d, std::size_t rows, std::size_t cols) {
  return {d.data(), rows, cols, cols};
}
inline Matrix view(std::span<double> d, std::size_t rows, std::size_t cols) {
  return {d.data(), rows, cols, cols};
}

using NeighborLists = std::vector<std::vector<std::uint32_t>>;

namespace serial {

/// c = a * b, or c += a * b when `accumulate`.
void matmul(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate);
/// c (+)= a^T * b, with a: m x k and b: m x n giving c: k x n.
void matmul_tn(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate);
/// c (+)= a * b^T, with a: m x n and b: k x n giving c: m x k.
void matmul_nt(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate);
/// For each point, the indices (ascending, self included) within Euclidean
/// distance `eps`. `points` is n x dims row-major.
NeighborLists region_queries(std::span<const double> points, std::size_t dims, double eps);

}  // namespace serial

namespace parallel {

void matmul(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate);
void matmul_tn(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate);
void matmul_nt(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate);
NeighborLists region_queries(std::span<const double> points, std::size_t dims, double eps);

}  // namespace parallel

/// Process-wide switch between the two implementations (default: parallel).
void use_parallel(bool enabled);
bool parallel_enabled();

void matmul(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate = false);
void matmul_tn(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate = false);
void matmul_nt(ConstMatrix a, ConstMatrix b, Matrix c, bool accumulate = false);
NeighborLists region_queries(std::span<const double> points, std::size_t dims, double eps);

int max_threads();

}  // namespace iotflow::kernels
