#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oreo/numerics/kernels.hpp"

using namespace oreo::num::kernels;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (double& e : v) e = nd(rng);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <= 1e-12 * (1.0 + std::abs(a[i])));
  }
}

}  // namespace

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const KernelTable* simd = avx2_table();
  if (!simd || !cpu_has_avx2()) {
    MESSAGE("AVX2 unavailable; equivalence test skipped");
    return;
  }
  const KernelTable& ref = scalar_table();
  std::mt19937_64 rng(42);
  // odd sizes exercise the remainder loops
  const std::size_t sizes[] = {1, 3, 4, 7, 8, 9, 16, 31, 64, 65};
  for (std::size_t n : sizes) {
    auto a = random_vec(rng, n), b = random_vec(rng, n);
    CHECK(std::abs(ref.dot(a.data(), b.data(), n) - simd->dot(a.data(), b.data(), n)) < 1e-12 * n);

    auto y1 = b, y2 = b;
    ref.axpy(0.37, a.data(), y1.data(), n);
    simd->axpy(0.37, a.data(), y2.data(), n);
    check_close(y1, y2);

    auto z1 = b, z2 = b;
    ref.mul_acc(a.data(), b.data(), z1.data(), n);
    simd->mul_acc(a.data(), b.data(), z2.data(), n);
    check_close(z1, z2);
  }
  for (std::size_t m : {1u, 3u, 4u, 9u, 30u}) {
    for (std::size_t k : {1u, 5u, 16u, 64u}) {
      for (std::size_t n : {1u, 7u, 8u, 24u, 67u}) {
        auto a = random_vec(rng, m * k), b = random_vec(rng, k * n), bt = random_vec(rng, n * k);
        auto at = random_vec(rng, k * m), c0 = random_vec(rng, m * n);
        auto c1 = c0, c2 = c0;
        ref.gemm_nn(a.data(), b.data(), c1.data(), m, k, n);
        simd->gemm_nn(a.data(), b.data(), c2.data(), m, k, n);
        check_close(c1, c2);
        c1 = c0, c2 = c0;
        ref.gemm_nt(a.data(), bt.data(), c1.data(), m, k, n);
        simd->gemm_nt(a.data(), bt.data(), c2.data(), m, k, n);
        check_close(c1, c2);
        c1 = c0, c2 = c0;
        ref.gemm_tn(at.data(), b.data(), c1.data(), m, k, n);
        simd->gemm_tn(at.data(), b.data(), c2.data(), m, k, n);
        check_close(c1, c2);
      }
    }
  }
}

TEST_CASE("scalar gemm variants agree with a naive triple loop") {
  std::mt19937_64 rng(9);
  const std::size_t m = 5, k = 6, n = 7;
  auto a = random_vec(rng, m * k), b = random_vec(rng, k * n);
  std::vector<double> c(m * n, 0.0), expect(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) expect[i * n + j] += a[i * k + p] * b[p * n + j];
  scalar_table().gemm_nn(a.data(), b.data(), c.data(), m, k, n);
  check_close(c, expect);
}

TEST_CASE("backend selection") {
  const Backend before = active().backend;
  CHECK(select_backend(Backend::kScalar));
  CHECK(active().backend == Backend::kScalar);
  CHECK(backend_name(Backend::kScalar) == "scalar");
  if (cpu_has_avx2()) {
    CHECK(select_backend(Backend::kAvx2));
    CHECK(active().backend == Backend::kAvx2);
  }
  select_backend(before);
}
