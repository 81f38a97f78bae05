#pragma once

// Dense inner-loop kernels. Each kernel has a scalar reference and an AVX2
// variant; the active table is picked once at startup from CPUID and can be
// overridden with OREO_KERNELS=scalar or select_backend().

#include <cstddef>
#include <string_view>

namespace oreo::num::kernels {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = x * s elementwise product, accumulated: y += x * s
  void (*mul_acc)(const double* x, const double* s, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
};

const KernelTable& scalar_table();
// Null when the translation unit was built without AVX2 support.
const KernelTable* avx2_table();

bool cpu_has_avx2();
const KernelTable& active();
// Returns false if the requested backend is unavailable on this CPU.
bool select_backend(Backend backend);
std::string_view backend_name(Backend backend);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline void mul_acc(const double* x, const double* s, double* y, std::size_t n) {
  active().mul_acc(x, s, y, n);
}
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  active().gemm_nn(a, b, c, m, k, n);
}
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  active().gemm_nt(a, b, c, m, k, n);
}
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  active().gemm_tn(a, b, c, m, k, n);
}

}  // namespace oreo::num::kernels
