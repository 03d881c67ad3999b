#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "vwam/simd/kernels.hpp"

namespace vwam::simd {
namespace {

template <typename T>
std::vector<T> Random(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<T> v(n);
  for (T& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <typename T>
double Tolerance() {
  return std::is_same_v<T, float> ? 1e-5 : 1e-13;
}

template <typename T>
void CheckEquivalent(Isa isa) {
  const KernelTable<T>& ref = kernels<T>(Isa::kScalar);
  const KernelTable<T>& vec = kernels<T>(isa);
  std::mt19937_64 rng(17);
  for (std::size_t n = 0; n <= 67; ++n) {
    const auto a = Random<T>(n, rng);
    const auto b = Random<T>(n, rng);
    double scale = 1.0;
    for (std::size_t i = 0; i < n; ++i) scale += std::abs(static_cast<double>(a[i] * b[i]));

    EXPECT_NEAR(ref.dot(a.data(), b.data(), n), vec.dot(a.data(), b.data(), n), Tolerance<T>() * scale) << n;
    EXPECT_NEAR(ref.sum(a.data(), n), vec.sum(a.data(), n), Tolerance<T>() * (n + 1) * 2) << n;

    auto y_ref = b, y_vec = b;
    ref.axpy(T(0.75), a.data(), y_ref.data(), n);
    vec.axpy(T(0.75), a.data(), y_vec.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y_ref[i], y_vec[i], Tolerance<T>() * 4);

    std::vector<T> r_ref(n), r_vec(n), m_ref(n), m_vec(n);
    ref.relu(a.data(), r_ref.data(), n);
    vec.relu(a.data(), r_vec.data(), n);
    ref.mul(a.data(), b.data(), m_ref.data(), n);
    vec.mul(a.data(), b.data(), m_vec.data(), n);
    auto g_ref = b, g_vec = b;
    ref.relu_backward(a.data(), b.data(), g_ref.data(), n);
    vec.relu_backward(a.data(), b.data(), g_vec.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(r_ref[i], r_vec[i]);
      EXPECT_EQ(m_ref[i], m_vec[i]);
      EXPECT_EQ(g_ref[i], g_vec[i]);
    }
  }
}

TEST(SimdKernels, ScalarReferenceValues) {
  const std::vector<double> a{1, -2, 3}, b{4, 5, -6};
  const auto& k = kernels<double>(Isa::kScalar);
  EXPECT_EQ(k.dot(a.data(), b.data(), 3), 4.0 - 10.0 - 18.0);
  EXPECT_EQ(k.sum(a.data(), 3), 2.0);
  std::vector<double> r(3);
  k.relu(a.data(), r.data(), 3);
  EXPECT_EQ(r, (std::vector<double>{1, 0, 3}));
}

TEST(SimdKernels, VectorVariantsMatchScalar) {
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (!isa_supported(isa)) continue;
    SCOPED_TRACE(std::string(isa_name(isa)));
    CheckEquivalent<float>(isa);
    CheckEquivalent<double>(isa);
  }
}

TEST(SimdKernels, DispatchCanBeForcedToScalar) {
  const Isa before = active_isa();
  set_active_isa(Isa::kScalar);
  EXPECT_EQ(active_isa(), Isa::kScalar);
  EXPECT_EQ(&kernels<float>(), &kernels<float>(Isa::kScalar));
  set_active_isa(before);
  EXPECT_EQ(active_isa(), before);
}

TEST(SimdKernels, UnsupportedIsaIsRejected) {
  for (Isa isa : {Isa::kAvx2, Isa::kNeon}) {
    if (!isa_supported(isa)) {
      EXPECT_THROW(set_active_isa(isa), std::invalid_argument);
    }
  }
}

}  // namespace
}  // namespace vwam::simd
