#include "vwam/featurizer/featurizer.hpp"

#include <set>

#include <spdlog/spdlog.h>

#include "vwam/util/text.hpp"

namespace vwam::featurizer {

std::size_t target_spatial_size(std::size_t channels, std::size_t rank, std::size_t fmax) {
  if (channels == 0 || rank == 0 || fmax == 0) throw ConfigError("target_spatial_size: arguments must be >= 1");
  // Exact integer search avoids pow() rounding at perfect powers.
  auto fits = [&](std::size_t s) {
    unsigned __int128 total = channels;
    for (std::size_t i = 0; i < rank; ++i) {
      total *= s;
      if (total > fmax) return false;
    }
    return true;
  };
  std::size_t lo = 1, hi = 2;
  while (fits(hi)) hi *= 2;
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    (fits(mid) ? lo : hi) = mid;
  }
  return lo;
}

Shape pooled_shape(const Shape& activation, std::size_t fmax) {
  if (activation.empty() || activation[0] == 0) throw ShapeError("activation needs at least one channel");
  if (activation.size() == 1) return activation;
  const std::size_t s = target_spatial_size(activation[0], activation.size() - 1, fmax);
  Shape out = activation;
  for (std::size_t a = 1; a < out.size(); ++a) out[a] = std::min(out[a], s);
  return out;
}

std::uint64_t Layout::fingerprint() const {
  util::Fnv1a h;
  h.u64(segments.size());
  for (const auto& s : segments) {
    h.str(s.name);
    h.u64(s.channels);
    h.u64(s.pooled.size());
    for (auto p : s.pooled) h.u64(p);
  }
  return h.digest();
}

const Segment& Layout::segment(const std::string& name) const {
  for (const auto& s : segments) {
    if (s.name == name) return s;
  }
  throw ConfigError("no feature segment named " + name);
}

Layout make_layout(std::span<const std::string> names, std::span<const Shape> pooled) {
  if (names.size() != pooled.size()) throw ShapeError("make_layout: names and shapes differ in length");
  Layout layout;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!seen.insert(names[i]).second) throw ConfigError("duplicate layer name " + names[i]);
    const Shape& s = pooled[i];
    if (s.empty()) throw ShapeError("layer " + names[i] + " has an empty shape");
    Segment seg{names[i], s[0], Shape(s.begin() + 1, s.end()), layout.total, ad::shape_size(s)};
    layout.total += seg.length;
    layout.segments.push_back(std::move(seg));
  }
  return layout;
}

Layout plan_layout(const backbone::BackboneSpec& spec, std::size_t fmax) {
  std::vector<Shape> pooled;
  for (const auto& s : spec.tap_shapes()) pooled.push_back(pooled_shape(s, fmax));
  const auto names = spec.tap_names();
  return make_layout(names, pooled);
}

template <typename T>
ad::Var<T> downsample_to(const ad::Var<T>& activation, std::size_t size) {
  const Shape& shape = activation.shape();
  if (shape.size() <= 1) return activation;
  std::vector<std::size_t> out(shape.begin() + 1, shape.end());
  bool identity = true;
  for (auto& e : out) {
    const std::size_t target = std::min(e, std::max<std::size_t>(size, 1));
    identity = identity && target == e;
    e = target;
  }
  if (identity) return activation;
  return ad::adaptive_avg_pool<T>(activation, out);
}

template <typename T>
ad::Var<T> downsample_layer(const ad::Var<T>& activation, std::size_t fmax) {
  const Shape& shape = activation.shape();
  if (shape.size() <= 1) return activation;
  return downsample_to(activation, target_spatial_size(shape[0], shape.size() - 1, fmax));
}

template <typename T>
Features<T> concat(std::span<const Activation<T>> pooled) {
  if (pooled.empty()) throw ShapeError("concat: no layers");
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<ad::Var<T>> parts;
  for (const auto& a : pooled) {
    names.push_back(a.name);
    shapes.push_back(a.value.shape());
    parts.push_back(a.value);
  }
  Layout layout = make_layout(names, shapes);
  return {ad::concat<T>(parts), std::move(layout)};
}

std::vector<std::vector<double>> temporal_average(const std::vector<std::vector<double>>& frames,
                                                  std::size_t frames_per_sample, std::size_t* dropped) {
  if (frames.empty()) throw ShapeError("temporal_average: no frames");
  if (frames_per_sample == 0) throw ConfigError("temporal_average: frames_per_sample must be >= 1");
  const std::size_t dim = frames[0].size();
  for (const auto& f : frames) {
    if (f.size() != dim) throw ShapeError("temporal_average: frames differ in length");
  }
  const std::size_t samples = frames.size() / frames_per_sample;
  const std::size_t rest = frames.size() - samples * frames_per_sample;
  if (dropped != nullptr) *dropped = rest;
  if (rest != 0) {
    spdlog::warn("temporal_average: dropping {} trailing frame(s)", rest);
  }
  std::vector<std::vector<double>> out(samples, std::vector<double>(dim, 0.0));
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t k = 0; k < frames_per_sample; ++k) {
      const auto& f = frames[s * frames_per_sample + k];
      for (std::size_t i = 0; i < dim; ++i) out[s][i] += f[i];
    }
    for (double& v : out[s]) v /= static_cast<double>(frames_per_sample);
  }
  return out;
}

Featurizer::Featurizer(const backbone::Backbone& net, std::size_t fmax)
    : net_(&net), fmax_(fmax), layout_(plan_layout(net.spec(), fmax)) {}

template <typename T>
ad::Var<T> Featurizer::features(const ad::Var<T>& image) const {
  const auto acts = net_->extract<T>(net_->preprocess<T>(image));
  std::vector<Activation<T>> pooled;
  for (const auto& a : acts) pooled.push_back({a.name, downsample_layer<T>(a.value, fmax_)});
  Features<T> f = concat<T>(pooled);
  if (f.layout.fingerprint() != layout_.fingerprint()) {
    throw FingerprintMismatch("feature layout differs from the planned layout");
  }
  return f.values;
}

std::vector<float> Featurizer::compute(const io::Image& image) const {
  ad::Graph<float> g(false);
  return features<float>(g.constant(image)).value().to_vector();
}

#define VWAM_INSTANTIATE_FEATURIZER(T)                                              \
  template ad::Var<T> downsample_to<T>(const ad::Var<T>&, std::size_t);             \
  template ad::Var<T> downsample_layer<T>(const ad::Var<T>&, std::size_t);          \
  template Features<T> concat<T>(std::span<const Activation<T>>);                   \
  template ad::Var<T> Featurizer::features<T>(const ad::Var<T>&) const;

VWAM_INSTANTIATE_FEATURIZER(float)
VWAM_INSTANTIATE_FEATURIZER(double)

}  // namespace vwam::featurizer
