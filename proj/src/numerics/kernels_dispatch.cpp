#include <atomic>
#include <cstdlib>
#include <string_view>

#include "claire/numerics/kernels.hpp"

namespace claire::kernels {

#if defined(CLAIRE_HAVE_AVX2)
const KernelTable* avx2_table_unchecked();
#endif

namespace {

bool cpu_has_avx2() {
#if defined(CLAIRE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend from_environment() {
  const char* env = std::getenv("CLAIRE_SIMD");
  if (env == nullptr) return Backend::automatic;
  const std::string_view v(env);
  if (v == "scalar") return Backend::scalar;
  if (v == "avx2") return Backend::avx2;
  return Backend::automatic;
}

const KernelTable* resolve(Backend b) {
  const KernelTable* simd = avx2_table();
  switch (b) {
    case Backend::scalar:
      return &scalar_table();
    case Backend::avx2:
    case Backend::automatic:
      return simd != nullptr ? simd : &scalar_table();
  }
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> s{resolve(from_environment())};
  return s;
}

}  // namespace

const KernelTable* avx2_table() {
#if defined(CLAIRE_HAVE_AVX2)
  static const bool ok = cpu_has_avx2();
  return ok ? avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_backend(Backend b) { slot().store(resolve(b), std::memory_order_release); }

Backend active_backend() {
  return &active() == &scalar_table() ? Backend::scalar : Backend::avx2;
}

}  // namespace claire::kernels
