#include "vwam/backbone/backbone.hpp"

#include <cmath>
#include <random>

#include "vwam/io/formats.hpp"
#include "vwam/util/text.hpp"

namespace vwam::backbone {
namespace {

struct ParamShape {
  std::string key;
  Shape shape;
  std::size_t fan_in;
};

std::vector<ParamShape> expected_params(const BackboneSpec& spec) {
  std::vector<ParamShape> out;
  for (const auto& st : spec.stages) {
    if (st.kind == StageKind::kConv) {
      const std::size_t fan_in = st.in * st.kernel * st.kernel;
      out.push_back({st.name + ".weight", {st.out, st.in, st.kernel, st.kernel}, fan_in});
      out.push_back({st.name + ".bias", {st.out}, fan_in});
    } else if (st.kind == StageKind::kLinear) {
      out.push_back({st.name + ".weight", {st.out, st.in}, st.in});
      out.push_back({st.name + ".bias", {st.out}, st.in});
    }
  }
  return out;
}

std::map<std::string, ad::Tensor<float>> seeded_params(const BackboneSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::map<std::string, ad::Tensor<float>> params;
  for (const auto& p : expected_params(spec)) {
    std::vector<float> data(ad::shape_size(p.shape));
    if (p.key.ends_with(".bias")) {
      std::uniform_real_distribution<double> u(-0.1, 0.1);
      for (float& v : data) v = static_cast<float>(u(rng));
    } else {
      std::normal_distribution<double> n(0.0, std::sqrt(2.0 / static_cast<double>(p.fan_in)));
      for (float& v : data) v = static_cast<float>(n(rng));
    }
    params.emplace(p.key, ad::Tensor<float>(p.shape, std::move(data)));
  }
  return params;
}

std::map<std::string, ad::Tensor<float>> file_params(const BackboneSpec& spec) {
  std::map<std::string, ad::Tensor<float>> loaded;
  for (auto& t : io::read_vwmw(spec.weights)) {
    Shape shape(t.shape.begin(), t.shape.end());
    loaded.emplace(t.name, ad::Tensor<float>(std::move(shape), std::move(t.data)));
  }
  std::map<std::string, ad::Tensor<float>> params;
  for (const auto& p : expected_params(spec)) {
    auto it = loaded.find(p.key);
    if (it == loaded.end()) throw FormatError(spec.weights + ": missing parameter " + p.key);
    if (it->second.shape() != p.shape) {
      throw FormatError(spec.weights + ": parameter " + p.key + " has shape " + ad::shape_str(it->second.shape()) +
                        ", expected " + ad::shape_str(p.shape));
    }
    params.emplace(p.key, it->second);
  }
  return params;
}

}  // namespace

Backbone::Backbone(BackboneSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (!spec_.executable()) {
    throw ConfigError("backbone " + spec_.name + " declares taps only and cannot be executed");
  }
  if (spec_.weights.starts_with("seeded:")) {
    params_ = seeded_params(spec_, util::parse_u64(spec_.weights.substr(7), "weights seed"));
  } else if (!spec_.weights.empty()) {
    params_ = file_params(spec_);
  } else {
    throw ConfigError("backbone " + spec_.name + ": no weight source");
  }
  for (const auto& [k, v] : params_) params_f64_.emplace(k, v.cast<double>());
  for (const auto& tap : spec_.taps) {
    for (std::size_t i = 0; i < spec_.stages.size(); ++i) {
      if (spec_.stages[i].name == tap.name) tap_stage_.push_back(i);
    }
  }
}

void Backbone::save_weights(const std::filesystem::path& path) const {
  std::vector<io::NamedTensor> out;
  for (const auto& [k, v] : params_) {
    out.push_back({k, std::vector<std::uint64_t>(v.shape().begin(), v.shape().end()), v.to_vector()});
  }
  io::write_vwmw(path, out);
}

std::uint64_t Backbone::weights_hash() const {
  util::Fnv1a h;
  for (const auto& [k, v] : params_) {
    h.str(k);
    for (auto e : v.shape()) h.u64(e);
    h.bytes(v.data().data(), v.data().size_bytes());
  }
  return h.digest();
}

template <typename T>
const ad::Tensor<T>& Backbone::param(const std::string& key) const {
  if constexpr (std::is_same_v<T, float>) {
    return params_.at(key);
  } else {
    return params_f64_.at(key);
  }
}

template <typename T>
ad::Var<T> Backbone::preprocess(const ad::Var<T>& image) const {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != 3) throw ShapeError("preprocess expects [3, H, W], got " + ad::shape_str(s));
  const std::size_t h = s[1], w = s[2], n = spec_.input_size;
  if (h == 0 || w == 0 || 8 * h < n || 8 * w < n) {
    throw ShapeError("preprocess: image " + std::to_string(h) + "x" + std::to_string(w) +
                     " is too small for input size " + std::to_string(n));
  }
  // Resized extents: shorter side becomes n, aspect ratio kept.
  std::size_t rh = n, rw = n;
  if (h < w) {
    rw = std::max<std::size_t>(n, static_cast<std::size_t>(std::lround(static_cast<double>(w) * n / h)));
  } else if (w < h) {
    rh = std::max<std::size_t>(n, static_cast<std::size_t>(std::lround(static_cast<double>(h) * n / w)));
  }
  const std::size_t top = (rh - n) / 2, left = (rw - n) / 2;
  auto src = [](std::size_t i, std::size_t resized, std::size_t original) {
    if (resized == 1) return (static_cast<double>(original) - 1.0) / 2.0;
    return static_cast<double>(i * (original - 1)) / static_cast<double>(resized - 1);
  };
  ad::SampleGrid grid{n, n, std::vector<double>(n * n), std::vector<double>(n * n)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      grid.ys[r * n + c] = src(r + top, rh, h);
      grid.xs[r * n + c] = src(c + left, rw, w);
    }
  }
  ad::Var<T> resized = (h == n && w == n) ? image : ad::bilinear_sample(image, grid);
  std::vector<double> gain(3), offset(3);
  for (int c = 0; c < 3; ++c) {
    gain[c] = 1.0 / spec_.stddev[c];
    offset[c] = -spec_.mean[c] / spec_.stddev[c];
  }
  return ad::channel_affine<T>(resized, gain, offset);
}

template <typename T>
ad::Var<T> Backbone::run_stage(std::size_t i, const ad::Var<T>& x) const {
  const StageSpec& st = spec_.stages[i];
  ad::Graph<T>& g = x.graph();
  switch (st.kind) {
    case StageKind::kConv:
      return ad::conv2d(x, g.constant(param<T>(st.name + ".weight")), g.constant(param<T>(st.name + ".bias")),
                        st.stride, st.pad);
    case StageKind::kRelu:
      return ad::relu(x);
    case StageKind::kMaxPool:
      return ad::maxpool2d(x, st.kernel, st.stride);
    case StageKind::kGlobalAvgPool: {
      const std::vector<std::size_t> ones(x.shape().size() - 1, 1);
      return ad::reshape(ad::adaptive_avg_pool<T>(x, ones), Shape{x.shape()[0]});
    }
    case StageKind::kLinear: {
      ad::Var<T> flat = x.shape().size() == 1 ? x : ad::reshape(x, Shape{x.value().size()});
      return ad::linear(flat, g.constant(param<T>(st.name + ".weight")), g.constant(param<T>(st.name + ".bias")));
    }
  }
  throw Error("unreachable stage kind");
}

template <typename T>
std::vector<Activation<T>> Backbone::extract(const ad::Var<T>& input, std::span<const std::string> taps) const {
  std::vector<bool> wanted(spec_.taps.size(), taps.empty());
  for (const auto& name : taps) {
    bool found = false;
    for (std::size_t t = 0; t < spec_.taps.size(); ++t) {
      if (spec_.taps[t].name == name) {
        wanted[t] = true;
        found = true;
      }
    }
    if (!found) throw ConfigError("unknown tap '" + name + "' for backbone " + spec_.name);
  }
  std::size_t last_stage = 0;
  bool any = false;
  for (std::size_t t = 0; t < wanted.size(); ++t) {
    if (wanted[t]) {
      last_stage = tap_stage_[t];
      any = true;
    }
  }
  std::vector<Activation<T>> out;
  if (!any) return out;
  const Shape expected{3, spec_.input_size, spec_.input_size};
  if (input.shape() != expected) {
    throw ShapeError("extract expects " + ad::shape_str(expected) + ", got " + ad::shape_str(input.shape()));
  }
  ad::Var<T> x = input;
  std::size_t next_tap = 0;
  for (std::size_t i = 0; i <= last_stage; ++i) {
    x = run_stage<T>(i, x);
    while (next_tap < tap_stage_.size() && tap_stage_[next_tap] == i) {
      if (wanted[next_tap]) out.push_back({spec_.taps[next_tap].name, x});
      ++next_tap;
    }
  }
  return out;
}

template <typename T>
ad::Var<T> Backbone::forward_to(const ad::Var<T>& input, std::size_t depth) const {
  if (depth > spec_.stages.size()) throw ConfigError("forward_to: depth exceeds stage count");
  ad::Var<T> x = input;
  for (std::size_t i = 0; i < depth; ++i) x = run_stage<T>(i, x);
  return x;
}

#define VWAM_INSTANTIATE_BACKBONE(T)                                                                     \
  template ad::Var<T> Backbone::preprocess<T>(const ad::Var<T>&) const;                                \
  template std::vector<Activation<T>> Backbone::extract<T>(const ad::Var<T>&, std::span<const std::string>) \
      const;                                                                                             \
  template ad::Var<T> Backbone::forward_to<T>(const ad::Var<T>&, std::size_t) const;

VWAM_INSTANTIATE_BACKBONE(float)
VWAM_INSTANTIATE_BACKBONE(double)

}  // namespace vwam::backbone
