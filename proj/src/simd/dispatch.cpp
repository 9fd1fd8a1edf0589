#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "rtgnn/simd/kernels.hpp"

namespace rtgnn::simd {
namespace {

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{nullptr};
  return slot;
}

const KernelTable& table_for(Level level) {
  return level == Level::kAvx2 ? avx2_kernels() : scalar_kernels();
}

Level initial_level() {
  const char* env = std::getenv("RTGNN_SIMD");
  if (env != nullptr) {
    const std::string requested{env};
    if (requested == "scalar") return Level::kScalar;
    if (requested == "avx2") {
      if (!level_supported(Level::kAvx2)) {
        throw std::runtime_error("RTGNN_SIMD=avx2 but the CPU lacks AVX2/FMA");
      }
      return Level::kAvx2;
    }
    throw std::runtime_error("RTGNN_SIMD must be 'scalar' or 'avx2', got '" +
                             requested + "'");
  }
  return detect_level();
}

}  // namespace

bool level_supported(Level level) {
  if (level == Level::kScalar) return true;
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Level detect_level() {
  return level_supported(Level::kAvx2) ? Level::kAvx2 : Level::kScalar;
}

std::string_view level_name(Level level) {
  switch (level) {
    case Level::kScalar:
      return "scalar";
    case Level::kAvx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& kernels() {
  const KernelTable* t = active_slot().load(std::memory_order_acquire);
  if (t == nullptr) {
    t = &table_for(initial_level());
    active_slot().store(t, std::memory_order_release);
  }
  return *t;
}

void set_level(Level level) {
  if (!level_supported(level)) {
    throw std::invalid_argument("SIMD level " + std::string(level_name(level)) +
                                " is not supported on this CPU");
  }
  active_slot().store(&table_for(level), std::memory_order_release);
}

}  // namespace rtgnn::simd
