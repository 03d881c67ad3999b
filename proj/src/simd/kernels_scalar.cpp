#include "vwam/simd/kernels.hpp"

namespace vwam::simd::scalar {
namespace {

template <typename T>
T Dot(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void Axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
T Sum(const T* x, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <typename T>
void Relu(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void ReluBackward(const T* x, const T* gout, T* gin, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) gin[i] += gout[i];
  }
}

template <typename T>
void Mul(const T* x, const T* y, T* z, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

}  // namespace

const KernelTable<float> kFloat{&Dot<float>,  &Axpy<float>,         &Sum<float>,
                                &Relu<float>, &ReluBackward<float>, &Mul<float>};
const KernelTable<double> kDouble{&Dot<double>,  &Axpy<double>,         &Sum<double>,
                                  &Relu<double>, &ReluBackward<double>, &Mul<double>};

}  // namespace vwam::simd::scalar
