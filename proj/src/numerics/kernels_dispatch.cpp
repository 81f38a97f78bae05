#include <atomic>
#include <cstdlib>
#include <string>

#include "oreo/numerics/kernels.hpp"

namespace oreo::num::kernels {

#if !defined(OREO_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_has_avx2() {
#if defined(OREO_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable* initial_table() {
  if (const char* env = std::getenv("OREO_KERNELS"); env && std::string(env) == "scalar") {
    return &scalar_table();
  }
  if (cpu_has_avx2()) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

bool select_backend(Backend backend) {
  if (backend == Backend::kScalar) {
    slot().store(&scalar_table());
    return true;
  }
  if (!cpu_has_avx2()) return false;
  slot().store(avx2_table());
  return true;
}

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace oreo::num::kernels
