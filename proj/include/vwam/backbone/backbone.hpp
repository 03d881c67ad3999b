#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vwam/autodiff/ops.hpp"

namespace vwam::backbone {

using ad::Shape;

enum class StageKind { kConv, kRelu, kMaxPool, kGlobalAvgPool, kLinear };

struct StageSpec {
  std::string name;
  StageKind kind = StageKind::kRelu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

struct TapSpec {
  std::string name;
  // Activation shape [C, d1..dn] stated in the profile. Required when the
  // profile has no executable stages.
  std::optional<Shape> declared_shape;
};

// Profile file (INI syntax):
//
//   [backbone]
//   name = tiny_cnn
//   input_size = 64
//   mean = 0.485, 0.456, 0.406
//   std = 0.229, 0.224, 0.225
//   weights = seeded:20240611
//
//   [stages]
//   conv1 = conv in=3 out=16 kernel=3 stride=2 pad=1
//   relu1 = relu
//   pool2 = maxpool kernel=2 stride=2
//   gap = global_avgpool
//   fc = linear in=64 out=64
//
//   [taps]
//   conv1 = 16x32x32
//
// `weights` is either seeded:<n> (He-normal weights from that seed) or a
// VWMW path relative to the profile. Stages run top to bottom. A tap names a
// stage and may state its activation shape, which is checked.
struct BackboneSpec {
  std::string name;
  std::size_t input_size = 0;
  std::array<double, 3> mean{0, 0, 0};
  std::array<double, 3> stddev{1, 1, 1};
  std::string weights;
  std::vector<StageSpec> stages;
  std::vector<TapSpec> taps;

  static BackboneSpec parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static BackboneSpec load(const std::filesystem::path& path);

  bool executable() const { return !stages.empty(); }
  std::vector<std::string> tap_names() const;
  // Activation shape of every tap, inferred from the stages when present.
  std::vector<Shape> tap_shapes() const;
  void validate() const;
};

// The reference profiles, also shipped as files under profiles/.
BackboneSpec tiny_cnn_spec(std::uint64_t seed = 20240611);
// A single 1x1 convolution tap: every feature is a linear function of the
// input pixels.
BackboneSpec linear_probe_spec(std::size_t input_size, std::size_t channels, std::uint64_t seed);

template <typename T>
struct Activation {
  std::string name;
  ad::Var<T> value;
};

class Backbone {
 public:
  explicit Backbone(BackboneSpec spec);

  const BackboneSpec& spec() const { return spec_; }

  // Parameters keyed "<stage>.weight" / "<stage>.bias".
  const std::map<std::string, ad::Tensor<float>>& parameters() const { return params_; }
  void save_weights(const std::filesystem::path& path) const;
  std::uint64_t weights_hash() const;

  // image: [3, H, W] in [0, 1]. Bilinear corner-aligned resize of the shorter
  // side to input_size, center crop, then (x - mean) / std per channel.
  template <typename T>
  ad::Var<T> preprocess(const ad::Var<T>& image) const;

  // Activations of the requested taps, in network order regardless of the
  // order requested. An empty request means every tap.
  template <typename T>
  std::vector<Activation<T>> extract(const ad::Var<T>& input, std::span<const std::string> taps = {}) const;

  // Output of the first `depth` stages.
  template <typename T>
  ad::Var<T> forward_to(const ad::Var<T>& input, std::size_t depth) const;

 private:
  template <typename T>
  ad::Var<T> run_stage(std::size_t i, const ad::Var<T>& x) const;
  template <typename T>
  const ad::Tensor<T>& param(const std::string& key) const;

  BackboneSpec spec_;
  std::map<std::string, ad::Tensor<float>> params_;
  std::map<std::string, ad::Tensor<double>> params_f64_;
  std::vector<std::size_t> tap_stage_;
};

}  // namespace vwam::backbone
