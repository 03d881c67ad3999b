#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vwam/backbone/backbone.hpp"
#include "vwam/io/png.hpp"

namespace vwam::featurizer {

using ad::Shape;
using backbone::Activation;

inline constexpr std::size_t kDefaultFeatureBudget = 5000;

// Largest S >= 1 with C * S^n <= fmax (S = 1 when even that exceeds the budget).
std::size_t target_spatial_size(std::size_t channels, std::size_t rank, std::size_t fmax);

// Pooled shape of an activation [C, d1..dn]: every spatial axis becomes
// min(S, d_i). Rank-1 activations are returned unchanged.
Shape pooled_shape(const Shape& activation, std::size_t fmax);

struct Segment {
  std::string name;
  std::size_t channels = 0;
  std::vector<std::size_t> pooled;  // empty for non-spatial taps
  std::size_t offset = 0;
  std::size_t length = 0;
};

struct Layout {
  std::vector<Segment> segments;
  std::size_t total = 0;

  std::uint64_t fingerprint() const;
  const Segment& segment(const std::string& name) const;
};

// Layout of the concatenated vector for already-pooled activation shapes.
Layout make_layout(std::span<const std::string> names, std::span<const Shape> pooled);
// Layout that downsampling a backbone's taps to `fmax` would produce.
Layout plan_layout(const backbone::BackboneSpec& spec, std::size_t fmax);

template <typename T>
ad::Var<T> downsample_layer(const ad::Var<T>& activation, std::size_t fmax);
// Pools every spatial axis to min(size, extent).
template <typename T>
ad::Var<T> downsample_to(const ad::Var<T>& activation, std::size_t size);

template <typename T>
struct Features {
  ad::Var<T> values;
  Layout layout;
};

// Flattens the pooled activations channel-major and joins them in order.
template <typename T>
Features<T> concat(std::span<const Activation<T>> pooled);

// Means over consecutive windows of `frames_per_sample` frames. A trailing
// partial window is dropped; its size is reported through `dropped`.
std::vector<std::vector<double>> temporal_average(const std::vector<std::vector<double>>& frames,
                                                  std::size_t frames_per_sample, std::size_t* dropped = nullptr);

// image -> preprocess -> taps -> downsample -> concat, for one backbone.
class Featurizer {
 public:
  Featurizer(const backbone::Backbone& net, std::size_t fmax);

  const backbone::Backbone& backbone() const { return *net_; }
  std::size_t fmax() const { return fmax_; }
  const Layout& layout() const { return layout_; }

  // Differentiable path from a [3, H, W] image.
  template <typename T>
  ad::Var<T> features(const ad::Var<T>& image) const;

  // Untraced evaluation; safe to call concurrently.
  std::vector<float> compute(const io::Image& image) const;

 private:
  const backbone::Backbone* net_;
  std::size_t fmax_;
  Layout layout_;
};

}  // namespace vwam::featurizer
