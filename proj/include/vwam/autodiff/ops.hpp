#pragma once

// Differentiable operators. Every operator checks its input shapes, rejects
// non-finite results with NumericError, and records a backward closure when
// the graph is tracing.
//
// Image-like tensors are channel-major [C, H, W]. Complex tensors carry a
// leading axis of extent 2 holding the real and imaginary planes.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "vwam/autodiff/graph.hpp"

namespace vwam::ad {

// Per output pixel, the (row, col) position in the input to sample. Pixel
// centres sit at integer coordinates; samples outside the input read zero.
struct SampleGrid {
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  std::vector<double> ys;
  std::vector<double> xs;
};

// src = [a00 a01 a02; a10 a11 a12] * [row, col, 1]^T for every output pixel.
using AffineMap = std::array<double, 6>;

SampleGrid affine_grid(std::size_t out_h, std::size_t out_w, const AffineMap& map);

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
              std::size_t pad);
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, std::size_t stride, std::size_t pad);

template <typename T>
Var<T> relu(const Var<T>& x);

// Floor-mode pooling without padding; ties go to the first element in
// row-major order.
template <typename T>
Var<T> maxpool2d(const Var<T>& x, std::size_t kernel, std::size_t stride);

// x: [C, d1..dn]; out_sizes has n entries, each in [1, d_i]. Bin i along an
// axis of extent E pooled to S covers [floor(i*E/S), ceil((i+1)*E/S)).
template <typename T>
Var<T> adaptive_avg_pool(const Var<T>& x, std::span<const std::size_t> out_sizes);

// weight [M, K] * x [K] + bias [M]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& x, T factor);
template <typename T>
Var<T> mean(const Var<T>& x);
template <typename T>
Var<T> sum(const Var<T>& x);
template <typename T>
Var<T> dot(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> bilinear_sample(const Var<T>& x, const SampleGrid& grid);

// Unitary-up-to-scale inverse DFT over the last two axes:
// out[y,x] = 1/(H*W) * sum_{u,v} in[u,v] * exp(+2*pi*i*(u*y/H + v*x/W)).
template <typename T>
Var<T> inverse_fft2(const Var<T>& x);

// |z| over the leading complex axis. The derivative at z = 0 is taken as 0.
template <typename T>
Var<T> complex_magnitude(const Var<T>& x);

// out[c, ...] = x[c, ...] * gain[c] + offset[c]
template <typename T>
Var<T> channel_affine(const Var<T>& x, std::span<const double> gain, std::span<const double> offset);

// out[c', ...] = sum_c matrix[c'][c] * x[c, ...]; matrix is row-major [C', C].
template <typename T>
Var<T> channel_mix(const Var<T>& x, std::span<const double> matrix, std::size_t out_channels);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

// Flattens each input and joins them into one vector.
template <typename T>
Var<T> concat(std::span<const Var<T>> parts);

// Generic entry point used by the gradient checker and by tooling that
// walks operators by tag.
struct OpParams {
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t kernel = 2;
  std::vector<std::size_t> out_sizes;
  SampleGrid grid;
  double factor = 1.0;
  std::vector<double> gain;
  std::vector<double> offset;
  std::vector<double> matrix;
  std::size_t out_channels = 0;
  Shape shape;
};

template <typename T>
Var<T> forward_op(OpTag op, std::span<const Var<T>> inputs, const OpParams& params);

// Every tag forward_op() accepts.
std::span<const OpTag> registered_ops();

}  // namespace vwam::ad
