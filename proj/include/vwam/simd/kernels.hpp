#pragma once

// Dense inner-loop kernels shared by the autodiff operators.
//
// Each kernel has a portable scalar reference and, where the target supports
// it, an AVX2/FMA (x86-64) or NEON (aarch64) variant. The variant is chosen
// once per process from CPU feature detection; VWAM_ISA=scalar|avx2|neon in
// the environment overrides the choice. Variants agree with the scalar
// reference up to floating-point reassociation in reductions.

#include <cstddef>
#include <span>
#include <string_view>

namespace vwam::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);
Isa best_isa();
Isa active_isa();
// Throws std::invalid_argument when the ISA is not supported on this CPU.
void set_active_isa(Isa isa);

template <typename T>
struct KernelTable {
  T (*dot)(const T* a, const T* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  T (*sum)(const T* x, std::size_t n);
  // y = max(x, 0)
  void (*relu)(const T* x, T* y, std::size_t n);
  // gin += gout where x > 0
  void (*relu_backward)(const T* x, const T* gout, T* gin, std::size_t n);
  // z = x * y
  void (*mul)(const T* x, const T* y, T* z, std::size_t n);
};

template <typename T>
const KernelTable<T>& kernels(Isa isa);

template <typename T>
const KernelTable<T>& kernels() {
  return kernels<T>(active_isa());
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  return kernels<T>().dot(a.data(), b.data(), a.size());
}

template <typename T>
void axpy(T alpha, std::span<const T> x, std::span<T> y) {
  kernels<T>().axpy(alpha, x.data(), y.data(), x.size());
}

template <typename T>
T sum(std::span<const T> x) {
  return kernels<T>().sum(x.data(), x.size());
}

namespace scalar {
extern const KernelTable<float> kFloat;
extern const KernelTable<double> kDouble;
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
extern const KernelTable<float> kFloat;
extern const KernelTable<double> kDouble;
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
extern const KernelTable<float> kFloat;
extern const KernelTable<double> kDouble;
}  // namespace neon
#endif

}  // namespace vwam::simd
