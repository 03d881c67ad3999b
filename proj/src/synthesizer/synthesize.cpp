#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "vwam/io/png.hpp"
#include "vwam/synthesizer/synthesizer.hpp"

namespace vwam::synthesizer {

void SynthesisConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("Adam epsilon must be positive");
  if (canvas < 32) throw ConfigError("canvas size must be at least 32, got " + std::to_string(canvas));
  if (augment.rescale && !(augment.scale_lo > 0 && augment.scale_lo <= augment.scale_hi)) {
    throw ConfigError("resized-crop scale range is invalid");
  }
  if (augment.crop_pad < 0 || augment.crop2_pad < 0 || augment.rotate_degrees < 0) {
    throw ConfigError("augmentation ranges must be non-negative");
  }
}

std::string SynthesisConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "iterations=" << iterations << "\n"
     << "learning_rate=" << learning_rate << "\n"
     << "adam_beta1=" << beta1 << "\n"
     << "adam_beta2=" << beta2 << "\n"
     << "adam_epsilon=" << epsilon << "\n"
     << "init=" << init_mode_name(init) << "\n"
     << "canvas=" << canvas << "\n"
     << "seed=" << seed << "\n"
     << "precision=" << (precision == Precision::kFloat ? "float" : "double") << "\n"
     << "augment_crop=" << augment.crop << " pad=" << augment.crop_pad << "\n"
     << "augment_rotate=" << augment.rotate << " degrees=" << augment.rotate_degrees << "\n"
     << "augment_rescale=" << augment.rescale << " range=" << augment.scale_lo << ":" << augment.scale_hi << "\n"
     << "augment_crop2=" << augment.crop2 << " pad=" << augment.crop2_pad << "\n";
  if (color) {
    os << "color_matrix=";
    for (std::size_t i = 0; i < 9; ++i) os << (i ? "," : "") << (*color)[i];
    os << "\n";
  }
  return os.str();
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double epsilon)
    : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ShapeError("Adam parameter count changed");
  ++t_;
  beta1_pow_ *= beta1_;
  beta2_pow_ *= beta2_;
  const double c1 = 1.0 - beta1_pow_, c2 = 1.0 - beta2_pow_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + epsilon_);
  }
}

namespace {

void check_objective(const objective::ContrastObjective& obj, const featurizer::Featurizer& featurizer) {
  if (obj.fingerprint != featurizer.layout().fingerprint()) {
    throw FingerprintMismatch("objective was built for feature layout " + std::to_string(obj.fingerprint) +
                              " but the featurizer produces " + std::to_string(featurizer.layout().fingerprint()));
  }
  if (std::size_t(obj.beta_final.size()) != featurizer.layout().total) {
    throw ShapeError("objective has " + std::to_string(obj.beta_final.size()) + " weights for " +
                     std::to_string(featurizer.layout().total) + " features");
  }
  if (!obj.beta_final.allFinite() || obj.beta_final.norm() < 1e-12) {
    throw DegenerateObjective("objective vector is zero or non-finite");
  }
}

template <typename T>
double ascent_step(FourierImage& image, Adam& adam, const objective::ContrastObjective& obj,
                   const featurizer::Featurizer& featurizer, const SynthesisConfig& cfg, std::size_t iteration,
                   std::vector<double>& grad) {
  ad::Graph<T> g;
  std::vector<T> values(image.coeffs.begin(), image.coeffs.end());
  auto c = g.parameter(ad::Tensor<T>({2, 3, image.height, image.width}, std::move(values)));
  auto pixels = image.render(c);
  if (cfg.augment.any()) pixels = augment(pixels, cfg.augment, cfg.seed, iteration);
  auto s = objective::predicted_contrast(featurizer.features(pixels), featurizer.layout().fingerprint(), obj);
  const double value = double(s.value().item());
  auto grads = g.backward(ad::scale(s, T(-1)));
  const auto d = grads[c].data();
  std::copy(d.begin(), d.end(), grad.begin());
  adam.step(image.coeffs, grad);
  return value;
}

io::Image clamp01(const io::Image& image) {
  auto v = image.to_vector();
  for (auto& x : v) x = std::clamp(x, 0.0f, 1.0f);
  return io::Image(image.shape(), std::move(v));
}

}  // namespace

double evaluate(const io::Image& image, const objective::ContrastObjective& obj,
                const featurizer::Featurizer& featurizer) {
  const auto f = featurizer.compute(image);
  const objective::Vector v = Eigen::Map<const Eigen::VectorXf>(f.data(), Eigen::Index(f.size())).cast<double>();
  return objective::predicted_contrast(v, featurizer.layout().fingerprint(), obj);
}

SynthesisResult synthesize_from(FourierImage start, const objective::ContrastObjective& obj,
                                const featurizer::Featurizer& featurizer, const SynthesisConfig& cfg) {
  cfg.validate();
  check_objective(obj, featurizer);

  const auto t0 = std::chrono::steady_clock::now();
  SynthesisResult result;
  result.trace.config = cfg;
  result.trace.s.reserve(cfg.iterations);
  FourierImage image = std::move(start);
  Adam adam(image.size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  std::vector<double> grad(image.size());

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    try {
      const double s = cfg.precision == Precision::kFloat
                           ? ascent_step<float>(image, adam, obj, featurizer, cfg, it, grad)
                           : ascent_step<double>(image, adam, obj, featurizer, cfg, it, grad);
      result.trace.s.push_back(s);
    } catch (const NumericError& e) {
      throw NumericError("synthesis diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    if (!std::all_of(image.coeffs.begin(), image.coeffs.end(), [](double x) { return std::isfinite(x); })) {
      throw NumericError("synthesis diverged at iteration " + std::to_string(it) + ": non-finite coefficients");
    }
  }

  result.image = clamp01(image.render());
  result.trace.final_image = result.image;
  result.trace.final_s = evaluate(result.image, obj, featurizer);
  result.trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.parameters = std::move(image);
  spdlog::debug("synthesis for '{}': s {:.4f} -> {:.4f} in {:.1f}s", obj.target, result.trace.s.front(),
                result.trace.final_s, result.trace.wall_seconds);
  return result;
}

SynthesisResult synthesize(const objective::ContrastObjective& obj, const featurizer::Featurizer& featurizer,
                           const SynthesisConfig& cfg) {
  cfg.validate();
  FourierImage start = init(cfg.init, cfg.canvas, cfg.seed);
  if (cfg.color) start = decorrelate_colors(start, *cfg.color);
  return synthesize_from(std::move(start), obj, featurizer, cfg);
}

void write_result(const std::string& png_path, const SynthesisResult& result, const objective::ContrastObjective& obj) {
  io::write_png(png_path, result.image);
  std::filesystem::path meta(png_path);
  meta.replace_extension(".meta.txt");
  std::ofstream os(meta);
  if (!os) throw FormatError("cannot write " + meta.string());
  const auto& s = result.trace.s;
  const std::size_t tail = std::max<std::size_t>(1, s.size() / 10);
  const double tail_mean = std::accumulate(s.end() - std::ptrdiff_t(tail), s.end(), 0.0) / double(tail);
  os.precision(10);
  os << "target=" << obj.target << "\n"
     << "reference=" << obj.reference << "\n"
     << "fingerprint=" << obj.fingerprint << "\n"
     << "lag_handling=lag blocks summed into one feature-length vector before contrast weighting\n"
     << result.trace.config.describe() << "final_s=" << result.trace.final_s << "\n"
     << "trace_first=" << s.front() << "\n"
     << "trace_last=" << s.back() << "\n"
     << "trace_min=" << *std::min_element(s.begin(), s.end()) << "\n"
     << "trace_max=" << *std::max_element(s.begin(), s.end()) << "\n"
     << "trace_tail_mean=" << tail_mean << "\n"
     << "wall_seconds=" << result.trace.wall_seconds << "\n";
}

}  // namespace vwam::synthesizer
