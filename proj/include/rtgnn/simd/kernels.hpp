#pragma once

// Dense double-precision kernels behind the tensor layers.
//
// Every kernel has a scalar reference implementation and an AVX2+FMA variant.
// The variant is chosen once at startup from the CPU features, and can be
// forced with the RTGNN_SIMD environment variable ("scalar" or "avx2").
// All matrices are row-major with explicit leading dimensions.

#include <cstddef>
#include <string_view>

namespace rtgnn::simd {

enum class Level { kScalar, kAvx2 };

struct KernelTable {
  Level level;

  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);

  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);

  double (*dot)(const double* x, const double* y, std::size_t n);

  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // y[i] = x[i] >= 0 ? x[i] : slope * x[i]; slope 0 gives relu.
  void (*leaky_relu)(double slope, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_kernels();
// Only valid when level_supported(Level::kAvx2).
const KernelTable& avx2_kernels();

bool level_supported(Level level);
Level detect_level();
std::string_view level_name(Level level);

// The active table. Initialised lazily from detect_level() and RTGNN_SIMD.
const KernelTable& kernels();
// Overrides the active table; throws std::invalid_argument if unsupported.
void set_level(Level level);

}  // namespace rtgnn::simd
