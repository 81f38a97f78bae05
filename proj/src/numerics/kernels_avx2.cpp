// Built with -mavx2 -mfma; only reached after the CPUID check in
// kernels_dispatch.cpp succeeds.
#include <immintrin.h>

#include "oreo/numerics/kernels.hpp"

namespace oreo::num::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double avx2_dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void avx2_axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void avx2_mul_acc(const double* x, const double* s, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(s + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += x[i] * s[i];
}

// C[m x n] += A * B[k x n] where A(i, p) = a[i * si + p * sp]. Register block
// of 4 rows by 8 columns; B rows are streamed once per block.
void avx2_gemm_strided(const double* a, std::size_t si, std::size_t sp, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      __m256d c00 = _mm256_loadu_pd(c + (i + 0) * n + j), c01 = _mm256_loadu_pd(c + (i + 0) * n + j + 4);
      __m256d c10 = _mm256_loadu_pd(c + (i + 1) * n + j), c11 = _mm256_loadu_pd(c + (i + 1) * n + j + 4);
      __m256d c20 = _mm256_loadu_pd(c + (i + 2) * n + j), c21 = _mm256_loadu_pd(c + (i + 2) * n + j + 4);
      __m256d c30 = _mm256_loadu_pd(c + (i + 3) * n + j), c31 = _mm256_loadu_pd(c + (i + 3) * n + j + 4);
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
        const __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
        __m256d av = _mm256_broadcast_sd(a + (i + 0) * si + p * sp);
        c00 = _mm256_fmadd_pd(av, b0, c00);
        c01 = _mm256_fmadd_pd(av, b1, c01);
        av = _mm256_broadcast_sd(a + (i + 1) * si + p * sp);
        c10 = _mm256_fmadd_pd(av, b0, c10);
        c11 = _mm256_fmadd_pd(av, b1, c11);
        av = _mm256_broadcast_sd(a + (i + 2) * si + p * sp);
        c20 = _mm256_fmadd_pd(av, b0, c20);
        c21 = _mm256_fmadd_pd(av, b1, c21);
        av = _mm256_broadcast_sd(a + (i + 3) * si + p * sp);
        c30 = _mm256_fmadd_pd(av, b0, c30);
        c31 = _mm256_fmadd_pd(av, b1, c31);
      }
      _mm256_storeu_pd(c + (i + 0) * n + j, c00); _mm256_storeu_pd(c + (i + 0) * n + j + 4, c01);
      _mm256_storeu_pd(c + (i + 1) * n + j, c10); _mm256_storeu_pd(c + (i + 1) * n + j + 4, c11);
      _mm256_storeu_pd(c + (i + 2) * n + j, c20); _mm256_storeu_pd(c + (i + 2) * n + j + 4, c21);
      _mm256_storeu_pd(c + (i + 3) * n + j, c30); _mm256_storeu_pd(c + (i + 3) * n + j + 4, c31);
    }
    for (; j < n; ++j) {
      for (std::size_t r = i; r < i + 4; ++r) {
        double s = c[r * n + j];
        for (std::size_t p = 0; p < k; ++p) s += a[r * si + p * sp] * b[p * n + j];
        c[r * n + j] = s;
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) avx2_axpy(a[i * si + p * sp], b + p * n, c + i * n, n);
  }
}

void avx2_gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  avx2_gemm_strided(a, k, 1, b, c, m, k, n);
}

void avx2_gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  avx2_gemm_strided(a, 1, m, b, c, m, k, n);
}

// Four output columns share one pass over the A row.
void avx2_gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a + i * k;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + (j + 0) * k;
      const double* b1 = b + (j + 1) * k;
      const double* b2 = b + (j + 2) * k;
      const double* b3 = b + (j + 3) * k;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(ar + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
      for (; p < k; ++p) {
        r0 += ar[p] * b0[p];
        r1 += ar[p] * b1[p];
        r2 += ar[p] * b2[p];
        r3 += ar[p] * b3[p];
      }
      c[i * n + j + 0] += r0;
      c[i * n + j + 1] += r1;
      c[i * n + j + 2] += r2;
      c[i * n + j + 3] += r3;
    }
    for (; j < n; ++j) c[i * n + j] += avx2_dot(ar, b + j * k, k);
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table{Backend::kAvx2, avx2_dot, avx2_axpy, avx2_mul_acc, avx2_gemm_nn, avx2_gemm_nt, avx2_gemm_tn};
  return &table;
}

}  // namespace oreo::num::kernels
