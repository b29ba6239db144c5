#include <algorithm>

#include <fmt/format.h>

#include "transnet/error.hpp"
#include "transnet/tensor.hpp"

// Cache-blocked row-major products. Each inner loop walks contiguous memory
// so the compiler can vectorize it; summation order is fixed, which keeps
// results bit-reproducible for a given build.

namespace transnet {

namespace {

constexpr std::size_t kBlockK = 128;
constexpr std::size_t kBlockN = 512;

void require(bool ok, const char* op, ConstMatrixView a, ConstMatrixView b, MatrixView c) {
  if (!ok) {
    throw ShapeError(fmt::format("{}: incompatible shapes a=({}x{}) b=({}x{}) c=({}x{})", op,
                                 a.rows, a.cols, b.rows, b.cols, c.rows, c.cols));
  }
}

}  // namespace

void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  require(a.cols == b.rows && c.rows == a.rows && c.cols == b.cols, "gemm_nn", a, b, c);
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  if (!accumulate) std::fill(c.data.begin(), c.data.end(), 0.0);
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t j1 = std::min(n, j0 + kBlockN);
    for (std::size_t t0 = 0; t0 < k; t0 += kBlockK) {
      const std::size_t t1 = std::min(k, t0 + kBlockK);
      for (std::size_t i = 0; i < m; ++i) {
        double* crow = pc + i * n;
        const double* arow = pa + i * k;
        for (std::size_t t = t0; t < t1; ++t) {
          const double av = arow[t];
          if (av == 0.0) continue;
          const double* brow = pb + t * n;
          for (std::size_t j = j0; j < j1; ++j) crow[j] += av * brow[j];
        }
      }
    }
  }
}

void gemm_nt(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  require(a.cols == b.cols && c.rows == a.rows && c.cols == b.rows, "gemm_nt", a, b, c);
  const std::size_t m = a.rows, k = a.cols, n = b.rows;
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      // Four partial sums break the dependency chain.
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      std::size_t t = 0;
      for (; t + 4 <= k; t += 4) {
        s0 += arow[t] * brow[t];
        s1 += arow[t + 1] * brow[t + 1];
        s2 += arow[t + 2] * brow[t + 2];
        s3 += arow[t + 3] * brow[t + 3];
      }
      for (; t < k; ++t) s0 += arow[t] * brow[t];
      const double sum = (s0 + s1) + (s2 + s3);
      pc[i * n + j] = accumulate ? pc[i * n + j] + sum : sum;
    }
  }
}

void gemm_tn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  require(a.rows == b.rows && c.rows == a.cols && c.cols == b.cols, "gemm_tn", a, b, c);
  const std::size_t k = a.rows, m = a.cols, n = b.cols;
  if (!accumulate) std::fill(c.data.begin(), c.data.end(), 0.0);
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  for (std::size_t t = 0; t < k; ++t) {
    const double* arow = pa + t * m;
    const double* brow = pb + t * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace transnet
