#pragma once

// Brute-force reference implementations used only by tests. They share no
// code with the library and favour obviousness over speed.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace vwam::testing {

// x [C,H,W], w [O,C,KH,KW], b [O] (may be empty).
inline std::vector<double> naive_conv2d(const std::vector<double>& x, std::size_t c, std::size_t h, std::size_t w,
                                        const std::vector<double>& k, std::size_t o, std::size_t kh, std::size_t kw,
                                        const std::vector<double>& b, std::size_t stride, std::size_t pad,
                                        std::size_t* out_h, std::size_t* out_w) {
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<double> out(o * oh * ow, 0.0);
  for (std::size_t oc = 0; oc < o; ++oc)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = b.empty() ? 0.0 : b[oc];
        for (std::size_t ic = 0; ic < c; ++ic)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              acc += k[((oc * c + ic) * kh + ky) * kw + kx] * x[(ic * h + iy) * w + ix];
            }
        out[(oc * oh + oy) * ow + ox] = acc;
      }
  *out_h = oh;
  *out_w = ow;
  return out;
}

inline std::vector<double> naive_maxpool(const std::vector<double>& x, std::size_t c, std::size_t h, std::size_t w,
                                         std::size_t k, std::size_t s) {
  const std::size_t oh = (h - k) / s + 1, ow = (w - k) / s + 1;
  std::vector<double> out;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double best = -INFINITY;
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) best = std::max(best, x[(ch * h + oy * s + ky) * w + ox * s + kx]);
        out.push_back(best);
      }
  return out;
}

// Standard adaptive pooling bin edges: floor(i*E/S) .. ceil((i+1)*E/S).
inline std::size_t bin_lo(std::size_t i, std::size_t e, std::size_t s) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(i) * e / s));
}
inline std::size_t bin_hi(std::size_t i, std::size_t e, std::size_t s) {
  return static_cast<std::size_t>(std::ceil(static_cast<double>(i + 1) * e / s));
}

inline std::vector<double> naive_adaptive_pool2d(const std::vector<double>& x, std::size_t c, std::size_t h,
                                                 std::size_t w, std::size_t sh, std::size_t sw) {
  std::vector<double> out;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < sh; ++i)
      for (std::size_t j = 0; j < sw; ++j) {
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t y = bin_lo(i, h, sh); y < bin_hi(i, h, sh); ++y)
          for (std::size_t xx = bin_lo(j, w, sw); xx < bin_hi(j, w, sw); ++xx) {
            acc += x[(ch * h + y) * w + xx];
            ++n;
          }
        out.push_back(acc / static_cast<double>(n));
      }
  return out;
}

inline std::vector<double> naive_adaptive_pool1d(const std::vector<double>& x, std::size_t c, std::size_t e,
                                                 std::size_t s) {
  std::vector<double> out;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < s; ++i) {
      double acc = 0.0;
      for (std::size_t k = bin_lo(i, e, s); k < bin_hi(i, e, s); ++k) acc += x[ch * e + k];
      out.push_back(acc / static_cast<double>(bin_hi(i, e, s) - bin_lo(i, e, s)));
    }
  return out;
}

// |(1/HW) sum_{u,v} c[u,v] exp(+2 pi i (u y / H + v x / W))| by direct summation.
inline std::vector<double> naive_idft2_magnitude(const std::vector<std::complex<double>>& coeffs, std::size_t h,
                                                 std::size_t w) {
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      std::complex<double> acc = 0.0;
      for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v) {
          const double phase = 2.0 * std::numbers::pi *
                               (static_cast<double>(u * y) / static_cast<double>(h) +
                                static_cast<double>(v * x) / static_cast<double>(w));
          acc += coeffs[u * w + v] * std::complex<double>(std::cos(phase), std::sin(phase));
        }
      out[y * w + x] = std::abs(acc / static_cast<double>(h * w));
    }
  return out;
}

}  // namespace vwam::testing
