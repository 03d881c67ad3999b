#include "vwam/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <string>

#include "vwam/autodiff/fft.hpp"
#include "vwam/simd/kernels.hpp"

namespace vwam::ad {

std::string_view op_name(OpTag op) {
  switch (op) {
    case OpTag::kLeaf: return "leaf";
    case OpTag::kConv2d: return "conv2d";
    case OpTag::kRelu: return "relu";
    case OpTag::kMaxPool2d: return "maxpool2d";
    case OpTag::kAdaptiveAvgPool: return "adaptive_avg_pool";
    case OpTag::kLinear: return "linear";
    case OpTag::kMatmul: return "matmul";
    case OpTag::kAdd: return "add";
    case OpTag::kMul: return "mul";
    case OpTag::kScale: return "scale";
    case OpTag::kMean: return "mean";
    case OpTag::kSum: return "sum";
    case OpTag::kDot: return "dot";
    case OpTag::kBilinearSample: return "bilinear_sample";
    case OpTag::kInverseFft2: return "inverse_fft2";
    case OpTag::kComplexMagnitude: return "complex_magnitude";
    case OpTag::kChannelAffine: return "channel_affine";
    case OpTag::kChannelMix: return "channel_mix";
    case OpTag::kReshape: return "reshape";
    case OpTag::kConcat: return "concat";
  }
  return "unknown";
}

std::span<const OpTag> registered_ops() {
  static constexpr OpTag kOps[] = {
      OpTag::kConv2d,         OpTag::kRelu,        OpTag::kMaxPool2d,       OpTag::kAdaptiveAvgPool,
      OpTag::kLinear,         OpTag::kMatmul,      OpTag::kAdd,             OpTag::kMul,
      OpTag::kScale,          OpTag::kMean,        OpTag::kSum,             OpTag::kDot,
      OpTag::kBilinearSample, OpTag::kInverseFft2, OpTag::kComplexMagnitude, OpTag::kChannelAffine,
      OpTag::kChannelMix,     OpTag::kReshape,     OpTag::kConcat,
  };
  return kOps;
}

SampleGrid affine_grid(std::size_t out_h, std::size_t out_w, const AffineMap& map) {
  SampleGrid grid;
  grid.out_h = out_h;
  grid.out_w = out_w;
  grid.ys.resize(out_h * out_w);
  grid.xs.resize(out_h * out_w);
  for (std::size_t i = 0; i < out_h; ++i) {
    for (std::size_t j = 0; j < out_w; ++j) {
      const double r = static_cast<double>(i);
      const double c = static_cast<double>(j);
      grid.ys[i * out_w + j] = map[0] * r + map[1] * c + map[2];
      grid.xs[i * out_w + j] = map[3] * r + map[4] * c + map[5];
    }
  }
  return grid;
}

namespace {

template <typename T>
using BackwardFn = typename Graph<T>::BackwardFn;

template <typename T>
Graph<T>& SameGraph(std::initializer_list<const Var<T>*> vars, OpTag op) {
  Graph<T>* g = nullptr;
  for (const Var<T>* v : vars) {
    if (!v->valid()) throw Error(std::string(op_name(op)) + ": uninitialized input");
    if (g != nullptr && &v->graph() != g) {
      throw Error(std::string(op_name(op)) + ": inputs belong to different graphs");
    }
    g = &v->graph();
  }
  return *g;
}

template <typename T>
Var<T> Finish(Graph<T>& g, OpTag op, std::vector<NodeId> inputs, Shape shape, std::vector<T> out,
              BackwardFn<T> backward) {
  if (!all_finite<T>(out)) {
    throw NumericError(std::string(op_name(op)) + " produced a non-finite value");
  }
  return g.record(op, std::move(inputs), Tensor<T>(std::move(shape), std::move(out)), std::move(backward));
}

[[noreturn]] void ShapeFail(OpTag op, const std::string& detail) {
  throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

void RequireSameShape(OpTag op, const Shape& a, const Shape& b) {
  if (a != b) ShapeFail(op, "shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
std::shared_ptr<const std::vector<T>> Share(std::span<const T> values) {
  return std::make_shared<const std::vector<T>>(values.begin(), values.end());
}

}  // namespace

// ---------------------------------------------------------------- conv2d

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, std::size_t stride,
              std::size_t pad) {
  constexpr OpTag kOp = OpTag::kConv2d;
  const bool has_bias = bias.valid();
  Graph<T>& g = has_bias ? SameGraph<T>({&x, &weight, &bias}, kOp) : SameGraph<T>({&x, &weight}, kOp);
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 3) ShapeFail(kOp, "input must be [C,H,W], got " + shape_str(xs));
  if (ws.size() != 4) ShapeFail(kOp, "weight must be [O,C,KH,KW], got " + shape_str(ws));
  if (ws[1] != xs[0]) ShapeFail(kOp, "weight channels " + shape_str(ws) + " vs input " + shape_str(xs));
  if (stride == 0) ShapeFail(kOp, "stride must be >= 1");
  const std::size_t channels = xs[0], height = xs[1], width = xs[2];
  const std::size_t out_ch = ws[0], kh = ws[2], kw = ws[3];
  if (height + 2 * pad < kh || width + 2 * pad < kw) ShapeFail(kOp, "kernel larger than padded input");
  if (has_bias && bias.shape() != Shape{out_ch}) ShapeFail(kOp, "bias must be [O]");
  const std::size_t oh = (height + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (width + 2 * pad - kw) / stride + 1;
  const std::size_t positions = oh * ow;
  const std::size_t taps = channels * kh * kw;

  // im2col: row k = (c, ky, kx), column p = (oy, ox).
  auto col = std::make_shared<std::vector<T>>(taps * positions, T(0));
  const auto xin = x.value().data();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        T* row = col->data() + ((c * kh + ky) * kw + kx) * positions;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
            row[oy * ow + ox] = xin[(c * height + iy) * width + ix];
          }
        }
      }
    }
  }

  const auto& kern = simd::kernels<T>();
  const auto w = weight.value().data();
  std::vector<T> out(out_ch * positions, T(0));
  for (std::size_t o = 0; o < out_ch; ++o) {
    T* dst = out.data() + o * positions;
    if (has_bias) std::fill(dst, dst + positions, bias.value()[o]);
    for (std::size_t k = 0; k < taps; ++k) {
      const T wk = w[o * taps + k];
      if (wk != T(0)) kern.axpy(wk, col->data() + k * positions, dst, positions);
    }
  }

  std::vector<NodeId> inputs{x.id(), weight.id()};
  if (has_bias) inputs.push_back(bias.id());
  Tensor<T> wt = weight.value();
  BackwardFn<T> backward = [=](std::span<const T> gout, std::span<T* const> gin) {
    const auto& k2 = simd::kernels<T>();
    if (T* gw = gin[1]) {
      for (std::size_t o = 0; o < out_ch; ++o) {
        for (std::size_t k = 0; k < taps; ++k) {
          gw[o * taps + k] += k2.dot(gout.data() + o * positions, col->data() + k * positions, positions);
        }
      }
    }
    if (has_bias && gin[2] != nullptr) {
      for (std::size_t o = 0; o < out_ch; ++o) gin[2][o] += k2.sum(gout.data() + o * positions, positions);
    }
    if (T* gx = gin[0]) {
      std::vector<T> gcol(taps * positions, T(0));
      const auto wv = wt.data();
      for (std::size_t o = 0; o < out_ch; ++o) {
        for (std::size_t k = 0; k < taps; ++k) {
          const T wk = wv[o * taps + k];
          if (wk != T(0)) k2.axpy(wk, gout.data() + o * positions, gcol.data() + k * positions, positions);
        }
      }
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T* row = gcol.data() + ((c * kh + ky) * kw + kx) * positions;
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
                gx[(c * height + iy) * width + ix] += row[oy * ow + ox];
              }
            }
          }
        }
      }
    }
  };
  return Finish<T>(g, kOp, std::move(inputs), Shape{out_ch, oh, ow}, std::move(out), std::move(backward));
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, std::size_t stride, std::size_t pad) {
  return conv2d<T>(x, weight, Var<T>(), stride, pad);
}

// ---------------------------------------------------------------- relu

template <typename T>
Var<T> relu(const Var<T>& x) {
  Graph<T>& g = SameGraph<T>({&x}, OpTag::kRelu);
  const auto in = x.value().data();
  std::vector<T> out(in.size());
  simd::kernels<T>().relu(in.data(), out.data(), in.size());
  Tensor<T> xv = x.value();
  BackwardFn<T> backward = [xv](std::span<const T> gout, std::span<T* const> gin) {
    simd::kernels<T>().relu_backward(xv.data().data(), gout.data(), gin[0], gout.size());
  };
  return Finish<T>(g, OpTag::kRelu, {x.id()}, x.shape(), std::move(out), std::move(backward));
}

// ---------------------------------------------------------------- maxpool2d

template <typename T>
Var<T> maxpool2d(const Var<T>& x, std::size_t kernel, std::size_t stride) {
  constexpr OpTag kOp = OpTag::kMaxPool2d;
  Graph<T>& g = SameGraph<T>({&x}, kOp);
  const Shape& xs = x.shape();
  if (xs.size() != 3) ShapeFail(kOp, "input must be [C,H,W], got " + shape_str(xs));
  if (kernel == 0 || stride == 0) ShapeFail(kOp, "kernel and stride must be >= 1");
  if (xs[1] < kernel || xs[2] < kernel) ShapeFail(kOp, "kernel larger than input");
  const std::size_t channels = xs[0], height = xs[1], width = xs[2];
  const std::size_t oh = (height - kernel) / stride + 1;
  const std::size_t ow = (width - kernel) / stride + 1;
  const auto in = x.value().data();
  std::vector<T> out(channels * oh * ow);
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (c * height + oy * stride) * width + ox * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t idx = (c * height + oy * stride + ky) * width + ox * stride + kx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (c * oh + oy) * ow + ox;
        out[o] = in[best];
        (*argmax)[o] = best;
      }
    }
  }
  BackwardFn<T> backward = [argmax](std::span<const T> gout, std::span<T* const> gin) {
    for (std::size_t o = 0; o < gout.size(); ++o) gin[0][(*argmax)[o]] += gout[o];
  };
  return Finish<T>(g, kOp, {x.id()}, Shape{channels, oh, ow}, std::move(out), std::move(backward));
}

// ---------------------------------------------------------------- adaptive_avg_pool

namespace {

struct PoolPass {
  std::size_t outer, extent, bins, inner;
};

std::size_t BinStart(std::size_t i, std::size_t extent, std::size_t bins) { return (i * extent) / bins; }
std::size_t BinEnd(std::size_t i, std::size_t extent, std::size_t bins) {
  return ((i + 1) * extent + bins - 1) / bins;
}

template <typename T>
std::vector<T> PoolForward(const PoolPass& p, std::span<const T> in) {
  std::vector<T> out(p.outer * p.bins * p.inner, T(0));
  for (std::size_t o = 0; o < p.outer; ++o) {
    for (std::size_t b = 0; b < p.bins; ++b) {
      const std::size_t start = BinStart(b, p.extent, p.bins);
      const std::size_t end = BinEnd(b, p.extent, p.bins);
      const T inv = T(1) / static_cast<T>(end - start);
      T* dst = out.data() + (o * p.bins + b) * p.inner;
      for (std::size_t e = start; e < end; ++e) {
        const T* src = in.data() + (o * p.extent + e) * p.inner;
        for (std::size_t k = 0; k < p.inner; ++k) dst[k] += src[k];
      }
      for (std::size_t k = 0; k < p.inner; ++k) dst[k] *= inv;
    }
  }
  return out;
}

template <typename T>
std::vector<T> PoolBackward(const PoolPass& p, std::span<const T> gout) {
  std::vector<T> gin(p.outer * p.extent * p.inner, T(0));
  for (std::size_t o = 0; o < p.outer; ++o) {
    for (std::size_t b = 0; b < p.bins; ++b) {
      const std::size_t start = BinStart(b, p.extent, p.bins);
      const std::size_t end = BinEnd(b, p.extent, p.bins);
      const T inv = T(1) / static_cast<T>(end - start);
      const T* src = gout.data() + (o * p.bins + b) * p.inner;
      for (std::size_t e = start; e < end; ++e) {
        T* dst = gin.data() + (o * p.extent + e) * p.inner;
        for (std::size_t k = 0; k < p.inner; ++k) dst[k] += src[k] * inv;
      }
    }
  }
  return gin;
}

}  // namespace

template <typename T>
Var<T> adaptive_avg_pool(const Var<T>& x, std::span<const std::size_t> out_sizes) {
  constexpr OpTag kOp = OpTag::kAdaptiveAvgPool;
  Graph<T>& g = SameGraph<T>({&x}, kOp);
  const Shape& xs = x.shape();
  if (xs.size() != out_sizes.size() + 1) {
    ShapeFail(kOp, "expected " + std::to_string(out_sizes.size()) + " spatial dims, got " + shape_str(xs));
  }
  // Box averages factor into one 1-D pass per spatial axis.
  std::vector<PoolPass> passes;
  Shape shape = xs;
  for (std::size_t a = 0; a < out_sizes.size(); ++a) {
    const std::size_t axis = a + 1;
    const std::size_t bins = out_sizes[a];
    if (bins == 0 || bins > shape[axis]) {
      ShapeFail(kOp, "output size " + std::to_string(bins) + " invalid for extent " + std::to_string(shape[axis]));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    passes.push_back(PoolPass{outer, shape[axis], bins, inner});
    shape[axis] = bins;
  }
  std::vector<T> cur = x.value().to_vector();
  for (const PoolPass& p : passes) cur = PoolForward<T>(p, cur);
  BackwardFn<T> backward = [passes](std::span<const T> gout, std::span<T* const> gin) {
    std::vector<T> cur(gout.begin(), gout.end());
    for (auto it = passes.rbegin(); it != passes.rend(); ++it) cur = PoolBackward<T>(*it, cur);
    for (std::size_t i = 0; i < cur.size(); ++i) gin[0][i] += cur[i];
  };
  return Finish<T>(g, kOp, {x.id()}, shape, std::move(cur), std::move(backward));
}

// ---------------------------------------------------------------- linear / matmul

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  constexpr OpTag kOp = OpTag::kLinear;
  Graph<T>& g = SameGraph<T>({&x, &weight, &bias}, kOp);
  const Shape& ws = weight.shape();
  if (ws.size() != 2) ShapeFail(kOp, "weight must be [M,K], got " + shape_str(ws));
  const std::size_t m = ws[0], k = ws[1];
  if (x.value().size() != k) ShapeFail(kOp, "input length " + std::to_string(x.value().size()) + " vs K=" + std::to_string(k));
  if (bias.shape() != Shape{m}) ShapeFail(kOp, "bias must be [M]");
  const auto& kern = simd::kernels<T>();
  const auto w = weight.value().data();
  const auto xv = x.value().data();
  std::vector<T> out(m);
  for (std::size_t r = 0; r < m; ++r) out[r] = kern.dot(w.data() + r * k, xv.data(), k) + bias.value()[r];
  Tensor<T> wt = weight.value();
  Tensor<T> xt = x.value();
  BackwardFn<T> backward = [wt, xt, m, k](std::span<const T> gout, std::span<T* const> gin) {
    const auto& k2 = simd::kernels<T>();
    if (T* gx = gin[0]) {
      for (std::size_t r = 0; r < m; ++r) k2.axpy(gout[r], wt.data().data() + r * k, gx, k);
    }
    if (T* gw = gin[1]) {
      for (std::size_t r = 0; r < m; ++r) k2.axpy(gout[r], xt.data().data(), gw + r * k, k);
    }
    if (T* gb = gin[2]) {
      for (std::size_t r = 0; r < m; ++r) gb[r] += gout[r];
    }
  };
  return Finish<T>(g, kOp, {x.id(), weight.id(), bias.id()}, Shape{m}, std::move(out), std::move(backward));
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  constexpr OpTag kOp = OpTag::kMatmul;
  Graph<T>& g = SameGraph<T>({&a, &b}, kOp);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
    ShapeFail(kOp, "cannot multiply " + shape_str(as) + " by " + shape_str(bs));
  }
  const std::size_t m = as[0], k = as[1], n = bs[1];
  const auto& kern = simd::kernels<T>();
  const auto av = a.value().data();
  const auto bv = b.value().data();
  std::vector<T> out(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < k; ++j) kern.axpy(av[i * k + j], bv.data() + j * n, out.data() + i * n, n);
  }
  Tensor<T> at = a.value();
  Tensor<T> bt = b.value();
  BackwardFn<T> backward = [at, bt, m, k, n](std::span<const T> gout, std::span<T* const> gin) {
    const auto& k2 = simd::kernels<T>();
    if (T* ga = gin[0]) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) ga[i * k + j] += k2.dot(gout.data() + i * n, bt.data().data() + j * n, n);
      }
    }
    if (T* gb = gin[1]) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < k; ++j) k2.axpy(at[i * k + j], gout.data() + i * n, gb + j * n, n);
      }
    }
  };
  return Finish<T>(g, kOp, {a.id(), b.id()}, Shape{m, n}, std::move(out), std::move(backward));
}

// ---------------------------------------------------------------- elementwise and reductions

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = SameGraph<T>({&a, &b}, OpTag::kAdd);
  RequireSameShape(OpTag::kAdd, a.shape(), b.shape());
  std::vector<T> out = a.value().to_vector();
  simd::kernels<T>().axpy(T(1), b.value().data().data(), out.data(), out.size());
  BackwardFn<T> backward = [](std::span<const T> gout, std::span<T* const> gin) {
    for (T* gi : gin) {
      if (gi != nullptr) simd::kernels<T>().axpy(T(1), gout.data(), gi, gout.size());
    }
  };
  return Finish<T>(g, OpTag::kAdd, {a.id(), b.id()}, a.shape(), std::move(out), std::move(backward));
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = SameGraph<T>({&a, &b}, OpTag::kMul);
  RequireSameShape(OpTag::kMul, a.shape(), b.shape());
  std::vector<T> out(a.value().size());
  simd::kernels<T>().mul(a.value().data().data(), b.value().data().data(), out.data(), out.size());
  Tensor<T> at = a.value();
  Tensor<T> bt = b.value();
  BackwardFn<T> backward = [at, bt](std::span<const T> gout, std::span<T* const> gin) {
    for (std::size_t i = 0; i < gout.size(); ++i) {
      if (gin[0] != nullptr) gin[0][i] += gout[i] * bt[i];
      if (gin[1] != nullptr) gin[1][i] += gout[i] * at[i];
    }
  };
  return Finish<T>(g, OpTag::kMul, {a.id(), b.id()}, a.shape(), std::move(out), std::move(backward));
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  Graph<T>& g = SameGraph<T>({&x}, OpTag::kScale);
  std::vector<T> out = x.value().to_vector();
  for (T& v : out) v *= factor;
  BackwardFn<T> backward = [factor](std::span<const T> gout, std::span<T* const> gin) {
    simd::kernels<T>().axpy(factor, gout.data(), gin[0], gout.size());
  };
  return Finish<T>(g, OpTag::kScale, {x.id()}, x.shape(), std::move(out), std::move(backward));
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  Graph<T>& g = SameGraph<T>({&x}, OpTag::kSum);
  const auto in = x.value().data();
  std::vector<T> out{simd::kernels<T>().sum(in.data(), in.size())};
  const std::size_t n = in.size();
  BackwardFn<T> backward = [n](std::span<const T> gout, std::span<T* const> gin) {
    for (std::size_t i = 0; i < n; ++i) gin[0][i] += gout[0];
  };
  return Finish<T>(g, OpTag::kSum, {x.id()}, Shape{}, std::move(out), std::move(backward));
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  Graph<T>& g = SameGraph<T>({&x}, OpTag::kMean);
  const auto in = x.value().data();
  if (in.empty()) ShapeFail(OpTag::kMean, "mean of an empty tensor");
  const std::size_t n = in.size();
  std::vector<T> out{simd::kernels<T>().sum(in.data(), n) / static_cast<T>(n)};
  BackwardFn<T> backward = [n](std::span<const T> gout, std::span<T* const> gin) {
    const T share = gout[0] / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) gin[0][i] += share;
  };
  return Finish<T>(g, OpTag::kMean, {x.id()}, Shape{}, std::move(out), std::move(backward));
}

template <typename T>
Var<T> dot(const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = SameGraph<T>({&a, &b}, OpTag::kDot);
  if (a.value().size() != b.value().size()) {
    ShapeFail(OpTag::kDot, "length mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<T> out{simd::kernels<T>().dot(a.value().data().data(), b.value().data().data(), a.value().size())};
  Tensor<T> at = a.value();
  Tensor<T> bt = b.value();
  BackwardFn<T> backward = [at, bt](std::span<const T> gout, std::span<T* const> gin) {
    const auto& k2 = simd::kernels<T>();
    if (gin[0] != nullptr) k2.axpy(gout[0], bt.data().data(), gin[0], bt.size());
    if (gin[1] != nullptr) k2.axpy(gout[0], at.data().data(), gin[1], at.size());
  };
  return Finish<T>(g, OpTag::kDot, {a.id(), b.id()}, Shape{}, std::move(out), std::move(backward));
}

// ---------------------------------------------------------------- bilinear_sample

template <typename T>
Var<T> bilinear_sample(const Var<T>& x, const SampleGrid& grid) {
  constexpr OpTag kOp = OpTag::kBilinearSample;
  Graph<T>& g = SameGraph<T>({&x}, kOp);
  const Shape& xs = x.shape();
  if (xs.size() != 3) ShapeFail(kOp, "input must be [C,H,W], got " + shape_str(xs));
  const std::size_t pixels = grid.out_h * grid.out_w;
  if (grid.ys.size() != pixels || grid.xs.size() != pixels) ShapeFail(kOp, "grid size does not match its extents");
  const std::size_t channels = xs[0], height = xs[1], width = xs[2];
  const std::size_t plane = height * width;

  // Four taps per output pixel; index -1 marks a zero-filled tap.
  auto index = std::make_shared<std::vector<std::int64_t>>(pixels * 4, -1);
  auto weight = std::make_shared<std::vector<T>>(pixels * 4, T(0));
  for (std::size_t p = 0; p < pixels; ++p) {
    const double y = grid.ys[p];
    const double xx = grid.xs[p];
    if (!std::isfinite(y) || !std::isfinite(xx)) ShapeFail(kOp, "non-finite sample coordinate");
    const double fy0 = std::floor(y);
    const double fx0 = std::floor(xx);
    const double wy = y - fy0;
    const double wx = xx - fx0;
    const double ws[4] = {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx};
    const double ys[4] = {fy0, fy0, fy0 + 1, fy0 + 1};
    const double xs4[4] = {fx0, fx0 + 1, fx0, fx0 + 1};
    for (int t = 0; t < 4; ++t) {
      if (ws[t] == 0.0) continue;
      if (ys[t] < 0 || ys[t] >= static_cast<double>(height) || xs4[t] < 0 || xs4[t] >= static_cast<double>(width)) continue;
      (*index)[p * 4 + t] = static_cast<std::int64_t>(ys[t]) * static_cast<std::int64_t>(width) + static_cast<std::int64_t>(xs4[t]);
      (*weight)[p * 4 + t] = static_cast<T>(ws[t]);
    }
  }

  const auto in = x.value().data();
  std::vector<T> out(channels * pixels, T(0));
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = in.data() + c * plane;
    T* dst = out.data() + c * pixels;
    for (std::size_t p = 0; p < pixels; ++p) {
      T acc = 0;
      for (int t = 0; t < 4; ++t) {
        const std::int64_t idx = (*index)[p * 4 + t];
        if (idx >= 0) acc += (*weight)[p * 4 + t] * src[idx];
      }
      dst[p] = acc;
    }
  }
  BackwardFn<T> backward = [index, weight, channels, pixels, plane](std::span<const T> gout,
                                                                     std::span<T* const> gin) {
    for (std::size_t c = 0; c < channels; ++c) {
      const T* src = gout.data() + c * pixels;
      T* dst = gin[0] + c * plane;
      for (std::size_t p = 0; p < pixels; ++p) {
        for (int t = 0; t < 4; ++t) {
          const std::int64_t idx = (*index)[p * 4 + t];
          if (idx >= 0) dst[idx] += (*weight)[p * 4 + t] * src[p];
        }
      }
    }
  };
  return Finish<T>(g, kOp, {x.id()}, Shape{channels, grid.out_h, grid.out_w}, std::move(out), std::move(backward));
}

// ---------------------------------------------------------------- inverse_fft2 / magnitude

namespace {

struct ComplexLayout {
  std::size_t planes, height, width;
};

ComplexLayout CheckComplex(OpTag op, const Shape& s) {
  if (s.size() < 3 || s[0] != 2) ShapeFail(op, "expected [2, ..., H, W] complex layout, got " + shape_str(s));
  ComplexLayout layout{1, s[s.size() - 2], s[s.size() - 1]};
  for (std::size_t i = 1; i + 2 < s.size(); ++i) layout.planes *= s[i];
  if (layout.height == 0 || layout.width == 0) ShapeFail(op, "zero-size transform");
  return layout;
}

// Applies a scaled 2-D DFT to each complex plane of split re/im storage.
template <typename T>
void TransformPlanes(const ComplexLayout& layout, std::span<const T> in, std::span<T> out, FftDirection dir,
                     double factor, bool accumulate) {
  const std::size_t plane = layout.height * layout.width;
  const std::size_t total = layout.planes * plane;
  std::vector<std::complex<double>> buf(plane);
  for (std::size_t p = 0; p < layout.planes; ++p) {
    for (std::size_t i = 0; i < plane; ++i) {
      buf[i] = {static_cast<double>(in[p * plane + i]), static_cast<double>(in[total + p * plane + i])};
    }
    dft2d(buf.data(), layout.height, layout.width, dir);
    for (std::size_t i = 0; i < plane; ++i) {
      const T re = static_cast<T>(buf[i].real() * factor);
      const T im = static_cast<T>(buf[i].imag() * factor);
      if (accumulate) {
        out[p * plane + i] += re;
        out[total + p * plane + i] += im;
      } else {
        out[p * plane + i] = re;
        out[total + p * plane + i] = im;
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> inverse_fft2(const Var<T>& x) {
  constexpr OpTag kOp = OpTag::kInverseFft2;
  Graph<T>& g = SameGraph<T>({&x}, kOp);
  const ComplexLayout layout = CheckComplex(kOp, x.shape());
  const double norm = 1.0 / static_cast<double>(layout.height * layout.width);
  std::vector<T> out(x.value().size());
  TransformPlanes<T>(layout, x.value().data(), out, FftDirection::kInverse, norm, false);
  // Adjoint of (1/HW) * conj(F) is (1/HW) * F.
  BackwardFn<T> backward = [layout, norm](std::span<const T> gout, std::span<T* const> gin) {
    TransformPlanes<T>(layout, gout, std::span<T>(gin[0], gout.size()), FftDirection::kForward, norm, true);
  };
  return Finish<T>(g, kOp, {x.id()}, x.shape(), std::move(out), std::move(backward));
}

template <typename T>
Var<T> complex_magnitude(const Var<T>& x) {
  constexpr OpTag kOp = OpTag::kComplexMagnitude;
  Graph<T>& g = SameGraph<T>({&x}, kOp);
  const Shape& s = x.shape();
  if (s.size() < 1 || s[0] != 2) ShapeFail(kOp, "expected leading complex axis of extent 2, got " + shape_str(s));
  const std::size_t n = x.value().size() / 2;
  const auto in = x.value().data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::hypot(in[i], in[n + i]);
  Tensor<T> xt = x.value();
  auto mag = Share<T>(out);
  BackwardFn<T> backward = [xt, mag, n](std::span<const T> gout, std::span<T* const> gin) {
    for (std::size_t i = 0; i < n; ++i) {
      const T m = (*mag)[i];
      if (m == T(0)) continue;
      gin[0][i] += gout[i] * xt[i] / m;
      gin[0][n + i] += gout[i] * xt[n + i] / m;
    }
  };
  return Finish<T>(g, kOp, {x.id()}, Shape(s.begin() + 1, s.end()), std::move(out), std::move(backward));
}

// ---------------------------------------------------------------- channel ops

template <typename T>
Var<T> channel_affine(const Var<T>& x, std::span<const double> gain, std::span<const double> offset) {
  constexpr OpTag kOp = OpTag::kChannelAffine;
  Graph<T>& g = SameGraph<T>({&x}, kOp);
  const Shape& s = x.shape();
  if (s.empty()) ShapeFail(kOp, "input needs a channel axis");
  const std::size_t channels = s[0];
  if (gain.size() != channels || offset.size() != channels) ShapeFail(kOp, "gain/offset length must equal channel count");
  const std::size_t plane = x.value().size() / channels;
  std::vector<T> out = x.value().to_vector();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      out[c * plane + i] = out[c * plane + i] * static_cast<T>(gain[c]) + static_cast<T>(offset[c]);
    }
  }
  std::vector<T> gains(gain.begin(), gain.end());
  BackwardFn<T> backward = [gains, plane](std::span<const T> gout, std::span<T* const> gin) {
    for (std::size_t c = 0; c < gains.size(); ++c) {
      simd::kernels<T>().axpy(gains[c], gout.data() + c * plane, gin[0] + c * plane, plane);
    }
  };
  return Finish<T>(g, kOp, {x.id()}, s, std::move(out), std::move(backward));
}

template <typename T>
Var<T> channel_mix(const Var<T>& x, std::span<const double> matrix, std::size_t out_channels) {
  constexpr OpTag kOp = OpTag::kChannelMix;
  Graph<T>& g = SameGraph<T>({&x}, kOp);
  const Shape& s = x.shape();
  if (s.empty()) ShapeFail(kOp, "input needs a channel axis");
  const std::size_t channels = s[0];
  if (matrix.size() != out_channels * channels) ShapeFail(kOp, "matrix must be [C_out, C_in]");
  const std::size_t plane = x.value().size() / channels;
  const auto in = x.value().data();
  const auto& kern = simd::kernels<T>();
  std::vector<T> out(out_channels * plane, T(0));
  for (std::size_t r = 0; r < out_channels; ++r) {
    for (std::size_t c = 0; c < channels; ++c) {
      kern.axpy(static_cast<T>(matrix[r * channels + c]), in.data() + c * plane, out.data() + r * plane, plane);
    }
  }
  std::vector<T> m(matrix.begin(), matrix.end());
  BackwardFn<T> backward = [m, channels, out_channels, plane](std::span<const T> gout, std::span<T* const> gin) {
    for (std::size_t r = 0; r < out_channels; ++r) {
      for (std::size_t c = 0; c < channels; ++c) {
        simd::kernels<T>().axpy(m[r * channels + c], gout.data() + r * plane, gin[0] + c * plane, plane);
      }
    }
  };
  Shape out_shape = s;
  out_shape[0] = out_channels;
  return Finish<T>(g, kOp, {x.id()}, out_shape, std::move(out), std::move(backward));
}

// ---------------------------------------------------------------- reshape / concat

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Graph<T>& g = SameGraph<T>({&x}, OpTag::kReshape);
  if (shape_size(shape) != x.value().size()) {
    ShapeFail(OpTag::kReshape, "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  BackwardFn<T> backward = [](std::span<const T> gout, std::span<T* const> gin) {
    simd::kernels<T>().axpy(T(1), gout.data(), gin[0], gout.size());
  };
  return Finish<T>(g, OpTag::kReshape, {x.id()}, std::move(shape), x.value().to_vector(), std::move(backward));
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts) {
  constexpr OpTag kOp = OpTag::kConcat;
  if (parts.empty()) ShapeFail(kOp, "nothing to concatenate");
  Graph<T>* g = &parts[0].graph();
  std::vector<NodeId> inputs;
  std::vector<std::size_t> offsets;
  std::vector<T> out;
  for (const Var<T>& p : parts) {
    if (!p.valid() || &p.graph() != g) throw Error("concat: inputs belong to different graphs");
    inputs.push_back(p.id());
    offsets.push_back(out.size());
    const auto d = p.value().data();
    out.insert(out.end(), d.begin(), d.end());
  }
  offsets.push_back(out.size());
  BackwardFn<T> backward = [offsets](std::span<const T> gout, std::span<T* const> gin) {
    for (std::size_t k = 0; k < gin.size(); ++k) {
      if (gin[k] == nullptr) continue;
      simd::kernels<T>().axpy(T(1), gout.data() + offsets[k], gin[k], offsets[k + 1] - offsets[k]);
    }
  };
  const std::size_t n = out.size();
  return Finish<T>(*g, kOp, std::move(inputs), Shape{n}, std::move(out), std::move(backward));
}

// ---------------------------------------------------------------- dispatch

template <typename T>
Var<T> forward_op(OpTag op, std::span<const Var<T>> in, const OpParams& p) {
  auto need = [&](std::size_t lo, std::size_t hi) {
    if (in.size() < lo || in.size() > hi) {
      throw Error(std::string(op_name(op)) + ": wrong number of inputs (" + std::to_string(in.size()) + ")");
    }
  };
  switch (op) {
    case OpTag::kConv2d:
      need(2, 3);
      return in.size() == 3 ? conv2d<T>(in[0], in[1], in[2], p.stride, p.pad) : conv2d<T>(in[0], in[1], p.stride, p.pad);
    case OpTag::kRelu: need(1, 1); return relu<T>(in[0]);
    case OpTag::kMaxPool2d: need(1, 1); return maxpool2d<T>(in[0], p.kernel, p.stride);
    case OpTag::kAdaptiveAvgPool: need(1, 1); return adaptive_avg_pool<T>(in[0], p.out_sizes);
    case OpTag::kLinear: need(3, 3); return linear<T>(in[0], in[1], in[2]);
    case OpTag::kMatmul: need(2, 2); return matmul<T>(in[0], in[1]);
    case OpTag::kAdd: need(2, 2); return add<T>(in[0], in[1]);
    case OpTag::kMul: need(2, 2); return mul<T>(in[0], in[1]);
    case OpTag::kScale: need(1, 1); return scale<T>(in[0], static_cast<T>(p.factor));
    case OpTag::kMean: need(1, 1); return mean<T>(in[0]);
    case OpTag::kSum: need(1, 1); return sum<T>(in[0]);
    case OpTag::kDot: need(2, 2); return dot<T>(in[0], in[1]);
    case OpTag::kBilinearSample: need(1, 1); return bilinear_sample<T>(in[0], p.grid);
    case OpTag::kInverseFft2: need(1, 1); return inverse_fft2<T>(in[0]);
    case OpTag::kComplexMagnitude: need(1, 1); return complex_magnitude<T>(in[0]);
    case OpTag::kChannelAffine: need(1, 1); return channel_affine<T>(in[0], p.gain, p.offset);
    case OpTag::kChannelMix: need(1, 1); return channel_mix<T>(in[0], p.matrix, p.out_channels);
    case OpTag::kReshape: need(1, 1); return reshape<T>(in[0], p.shape);
    case OpTag::kConcat:
      if (in.empty()) need(1, 1);
      return concat<T>(in);
    case OpTag::kLeaf: break;
  }
  throw Error("unknown operator tag " + std::to_string(static_cast<int>(op)));
}

#define VWAM_INSTANTIATE_OPS(T)                                                                 \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t); \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, std::size_t, std::size_t);            \
  template Var<T> relu<T>(const Var<T>&);                                                       \
  template Var<T> maxpool2d<T>(const Var<T>&, std::size_t, std::size_t);                        \
  template Var<T> adaptive_avg_pool<T>(const Var<T>&, std::span<const std::size_t>);            \
  template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);                       \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                                      \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                         \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                         \
  template Var<T> scale<T>(const Var<T>&, T);                                                   \
  template Var<T> mean<T>(const Var<T>&);                                                       \
  template Var<T> sum<T>(const Var<T>&);                                                        \
  template Var<T> dot<T>(const Var<T>&, const Var<T>&);                                         \
  template Var<T> bilinear_sample<T>(const Var<T>&, const SampleGrid&);                         \
  template Var<T> inverse_fft2<T>(const Var<T>&);                                               \
  template Var<T> complex_magnitude<T>(const Var<T>&);                                          \
  template Var<T> channel_affine<T>(const Var<T>&, std::span<const double>, std::span<const double>); \
  template Var<T> channel_mix<T>(const Var<T>&, std::span<const double>, std::size_t);          \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                             \
  template Var<T> concat<T>(std::span<const Var<T>>);                                           \
  template Var<T> forward_op<T>(OpTag, std::span<const Var<T>>, const OpParams&);

VWAM_INSTANTIATE_OPS(float)
VWAM_INSTANTIATE_OPS(double)

#undef VWAM_INSTANTIATE_OPS

}  // namespace vwam::ad
