#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vwam/autodiff/ops.hpp"
#include "vwam/featurizer/featurizer.hpp"
#include "vwam/io/png.hpp"
#include "vwam/objective/objective.hpp"

namespace vwam::synthesizer {

using ColorMatrix = std::array<double, 9>;  // row-major 3x3

enum class InitMode { kGray140, kBlackNoise };

InitMode parse_init_mode(const std::string& text);
std::string init_mode_name(InitMode mode);

inline constexpr double kGrayLevel = 140.0 / 255.0;
inline constexpr double kBlackNoiseStd = 0.01;

// Per-frequency factor 1 / max(|f|, 1/max(H, W)) with f in cycles per pixel,
// laid out like the H x W DFT output.
std::vector<double> frequency_scale(std::size_t height, std::size_t width);

// Image = color * |IDFT(scale * coeffs)| per channel. coeffs is [2, 3, H, W]
// (real and imaginary planes).
struct FourierImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> coeffs;
  std::optional<ColorMatrix> color;

  std::size_t size() const { return coeffs.size(); }

  template <typename T>
  ad::Var<T> render(const ad::Var<T>& coefficients) const;
  template <typename T>
  ad::Tensor<T> scale_tensor() const;

  // Untraced render, unclamped.
  io::Image render() const;
};

FourierImage init(InitMode mode, std::size_t size, std::uint64_t seed);

// Attaches a color matrix: rendered pixels become matrix * raw channels and
// the coefficients stay as they are. Throws ConfigError for a singular matrix.
FourierImage decorrelate_colors(const FourierImage& image, const ColorMatrix& matrix);

// Lower Cholesky factor of the RGB covariance over every pixel of `frames`.
ColorMatrix color_cholesky(std::span<const io::Image> frames);

struct AugmentConfig {
  bool crop = true;
  bool rotate = true;
  bool rescale = true;
  bool crop2 = true;
  double crop_pad = 5;
  double rotate_degrees = 5;
  double scale_lo = 0.95;
  double scale_hi = 1.05;
  double crop2_pad = 3;

  bool any() const { return crop || rotate || rescale || crop2; }
  static AugmentConfig none() { return {false, false, false, false}; }
};

// One random draw of the augmentation stack.
struct AugmentDraw {
  double shift_y = 0, shift_x = 0;
  double angle = 0;  // radians
  double scale = 1, crop_y = 0, crop_x = 0;
  double shift2_y = 0, shift2_x = 0;
};

AugmentDraw draw_augment(const AugmentConfig& cfg, std::uint64_t seed, std::uint64_t iteration);

// The sampling grids, in application order, for an H x W image.
std::vector<ad::SampleGrid> augment_grids(const AugmentConfig& cfg, const AugmentDraw& draw, std::size_t height,
                                          std::size_t width);

template <typename T>
ad::Var<T> augment(const ad::Var<T>& image, const AugmentConfig& cfg, std::uint64_t seed, std::uint64_t iteration);

io::Image augment(const io::Image& image, const AugmentConfig& cfg, std::uint64_t seed, std::uint64_t iteration);

enum class Precision { kFloat, kDouble };

struct SynthesisConfig {
  std::size_t iterations = 2500;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  InitMode init = InitMode::kGray140;
  std::size_t canvas = 500;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  std::optional<ColorMatrix> color;
  Precision precision = Precision::kFloat;

  void validate() const;
  // key=value lines, stable order.
  std::string describe() const;
};

struct SynthesisTrace {
  std::vector<double> s;
  io::Image final_image;
  SynthesisConfig config;
  double wall_seconds = 0;
  double final_s = 0;  // on the clamped, un-augmented image
};

struct SynthesisResult {
  io::Image image;
  SynthesisTrace trace;
  FourierImage parameters;
};

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1, double beta2, double epsilon);
  // Descent step on `params` for the gradient of a loss.
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
  double beta1_pow_ = 1, beta2_pow_ = 1;
};

// Gradient ascent on the predicted contrast s of the objective.
SynthesisResult synthesize(const objective::ContrastObjective& obj, const featurizer::Featurizer& featurizer,
                           const SynthesisConfig& cfg);

// Same loop from a given starting image.
SynthesisResult synthesize_from(FourierImage start, const objective::ContrastObjective& obj,
                                const featurizer::Featurizer& featurizer, const SynthesisConfig& cfg);

// s of an image without augmentation.
double evaluate(const io::Image& image, const objective::ContrastObjective& obj,
                const featurizer::Featurizer& featurizer);

// PNG plus `<out>.meta.txt` with the config echo, final s and a trace summary.
void write_result(const std::string& png_path, const SynthesisResult& result, const objective::ContrastObjective& obj);

}  // namespace vwam::synthesizer
