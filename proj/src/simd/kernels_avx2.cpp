// Compiled with -mavx2 -mfma; only reached through the dispatch table after a
// CPU feature check.

#include "rtgnn/simd/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

namespace rtgnn::simd {
namespace {

// 4 rows x 8 columns of C held in registers across the k loop.
inline void block_4x8(std::size_t k, const double* a, std::size_t lda,
                      const double* b, std::size_t ldb, double* c,
                      std::size_t ldc) {
  __m256d c00 = _mm256_loadu_pd(c);
  __m256d c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc);
  __m256d c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc);
  __m256d c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc);
  __m256d c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

// One row of C, vectorised over columns.
inline void row_kernel(std::size_t n, std::size_t k, const double* a,
                       const double* b, std::size_t ldb, double* c) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d c0 = _mm256_loadu_pd(c + j);
    __m256d c1 = _mm256_loadu_pd(c + j + 4);
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d av = _mm256_broadcast_sd(a + p);
      c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb + j), c0);
      c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b + p * ldb + j + 4), c1);
    }
    _mm256_storeu_pd(c + j, c0);
    _mm256_storeu_pd(c + j + 4, c1);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = _mm256_loadu_pd(c + j);
    for (std::size_t p = 0; p < k; ++p) {
      c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + p),
                           _mm256_loadu_pd(b + p * ldb + j), c0);
    }
    _mm256_storeu_pd(c + j, c0);
  }
  for (; j < n; ++j) {
    double s = c[j];
    for (std::size_t p = 0; p < k; ++p) s = std::fma(a[p], b[p * ldb + j], s);
    c[j] = s;
  }
}

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      block_4x8(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc);
    }
    if (j < n) {
      for (std::size_t r = 0; r < 4; ++r) {
        row_kernel(n - j, k, a + (i + r) * lda, b + j, ldb, c + (i + r) * ldc + j);
      }
    }
  }
  for (; i < m; ++i) row_kernel(n, k, a + i * lda, b, ldb, c + i * ldc);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

// 4 rows of A against 2 rows of B; each accumulator is one C entry reduced
// horizontally at the end.
inline void block_nt_4x2(std::size_t k, const double* a, std::size_t lda, const double* b,
                         std::size_t ldb, double* c, std::size_t ldc) {
  __m256d s[4][2];
  for (auto& row : s) row[0] = row[1] = _mm256_setzero_pd();
  const double* b0 = b;
  const double* b1 = b + ldb;
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4) {
    const __m256d v0 = _mm256_loadu_pd(b0 + p);
    const __m256d v1 = _mm256_loadu_pd(b1 + p);
    for (std::size_t r = 0; r < 4; ++r) {
      const __m256d av = _mm256_loadu_pd(a + r * lda + p);
      s[r][0] = _mm256_fmadd_pd(av, v0, s[r][0]);
      s[r][1] = _mm256_fmadd_pd(av, v1, s[r][1]);
    }
  }
  for (std::size_t r = 0; r < 4; ++r) {
    const double* ar = a + r * lda;
    double t0 = hsum(s[r][0]);
    double t1 = hsum(s[r][1]);
    for (std::size_t q = p; q < k; ++q) {
      t0 = std::fma(ar[q], b0[q], t0);
      t1 = std::fma(ar[q], b1[q], t1);
    }
    c[r * ldc] += t0;
    c[r * ldc + 1] += t1;
  }
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 2 <= n; j += 2) {
      block_nt_4x2(k, a + i * lda, lda, b + j * ldb, ldb, c + i * ldc + j, ldc);
    }
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        c[(i + r) * ldc + j] += dot_avx2(a + (i + r) * lda, b + j * ldb, k);
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i * ldc + j] += dot_avx2(a + i * lda, b + j * ldb, k);
    }
  }
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void leaky_relu_avx2(double slope, const double* x, double* y, std::size_t n) {
  const __m256d sv = _mm256_set1_pd(slope);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d neg = _mm256_cmp_pd(v, zero, _CMP_LT_OQ);
    _mm256_storeu_pd(y + i, _mm256_blendv_pd(v, _mm256_mul_pd(v, sv), neg));
  }
  for (; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : slope * x[i];
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{Level::kAvx2, gemm_nn_avx2, gemm_nt_avx2,
                                 dot_avx2, axpy_avx2, leaky_relu_avx2};
  return table;
}

}  // namespace rtgnn::simd

#else

namespace rtgnn::simd {
// Non-x86 builds: the table aliases the scalar kernels and level_supported()
// reports AVX2 as unavailable.
const KernelTable& avx2_kernels() { return scalar_kernels(); }
}  // namespace rtgnn::simd

#endif
