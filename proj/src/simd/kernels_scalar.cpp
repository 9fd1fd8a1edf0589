#include "rtgnn/simd/kernels.hpp"

namespace rtgnn::simd {
namespace {

void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    std::size_t lda, const double* b, std::size_t ldb, double* c,
                    std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * lda + p];
      const double* brow = b + p * ldb;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemm_nt_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    std::size_t lda, const double* b, std::size_t ldb, double* c,
                    std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * ldc + j] += dot_scalar(a + i * lda, b + j * ldb, k);
    }
  }
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void leaky_relu_scalar(double slope, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Level::kScalar, gemm_nn_scalar, gemm_nt_scalar,
                                 dot_scalar, axpy_scalar, leaky_relu_scalar};
  return table;
}

}  // namespace rtgnn::simd
