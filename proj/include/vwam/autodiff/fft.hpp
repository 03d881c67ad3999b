#pragma once

#include <complex>
#include <cstddef>

namespace vwam::ad {

enum class FftDirection { kForward = -1, kInverse = +1 };

// Unnormalized in-place 2-D DFT of a row-major h x w array:
// out[k,l] = sum_{m,n} in[m,n] * exp(sign * 2*pi*i*(k*m/h + l*n/w)).
// Safe to call concurrently; plans are cached per (h, w, direction).
void dft2d(std::complex<double>* data, std::size_t h, std::size_t w, FftDirection direction);

}  // namespace vwam::ad
