#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "vwam/simd/kernels.hpp"

namespace vwam::simd {
namespace {

Isa InitialIsa() {
  Isa isa = best_isa();
  if (const char* env = std::getenv("VWAM_ISA")) {
    const std::string requested(env);
    for (Isa candidate : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
      if (requested == isa_name(candidate) && isa_supported(candidate)) isa = candidate;
    }
  }
  return isa;
}

std::atomic<Isa>& ActiveIsaSlot() {
  static std::atomic<Isa> slot{InitialIsa()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa best_isa() {
  if (isa_supported(Isa::kAvx2)) return Isa::kAvx2;
  if (isa_supported(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

Isa active_isa() { return ActiveIsaSlot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA not supported on this CPU: " + std::string(isa_name(isa)));
  }
  ActiveIsaSlot().store(isa, std::memory_order_relaxed);
}

template <>
const KernelTable<float>& kernels<float>(Isa isa) {
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::kAvx2:
      return avx2::kFloat;
#endif
#if defined(__aarch64__)
    case Isa::kNeon:
      return neon::kFloat;
#endif
    default:
      return scalar::kFloat;
  }
}

template <>
const KernelTable<double>& kernels<double>(Isa isa) {
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::kAvx2:
      return avx2::kDouble;
#endif
#if defined(__aarch64__)
    case Isa::kNeon:
      return neon::kDouble;
#endif
    default:
      return scalar::kDouble;
  }
}

}  // namespace vwam::simd
