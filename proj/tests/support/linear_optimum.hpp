#pragma once

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "vwam/backbone/backbone.hpp"
#include "vwam/featurizer/featurizer.hpp"
#include "vwam/objective/objective.hpp"
#include "vwam/synthesizer/synthesizer.hpp"

namespace vwam::testing {

struct LinearOptimumReport {
  double cosine_reference = 0;  // displacement vs closed-form Adam displacement
  double cosine_gradient = 0;   // displacement vs raw pixel gradient
  double s_first = 0;
  double s_last = 0;
  bool nondecreasing = false;
  double seconds = 0;
};

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
  return ab / std::sqrt(aa * bb);
}

// A 1x1-conv probe makes s affine in the pixels, s = g.x + c. Starting from
// a constant image the rendered magnitude equals the real part of the
// inverse transform, so the coefficient gradient is a fixed linear map of g
// and Adam's bias-corrected step is exactly lr * G / (|G| + eps) every
// iteration. Both g and that displacement are computed here without the
// autodiff engine: g by evaluating s on basis images, the transforms by
// direct summation.
inline LinearOptimumReport linear_optimum_check(std::size_t canvas, std::size_t iterations, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  backbone::Backbone net(backbone::linear_probe_spec(32, 4, seed));
  featurizer::Featurizer feat(net, featurizer::kDefaultFeatureBudget);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  objective::ContrastObjective obj;
  obj.beta_final.resize(Eigen::Index(feat.layout().total));
  for (auto& b : obj.beta_final) b = normal(rng);
  obj.beta_final.normalize();
  obj.fingerprint = feat.layout().fingerprint();
  obj.target = "probe";

  const std::size_t n = canvas, plane = n * n, pixels = 3 * plane;
  auto s_of = [&](const std::vector<double>& x) {
    ad::Graph<double> g(false);
    auto img = g.constant(ad::Tensor<double>({3, n, n}, x));
    return objective::predicted_contrast(feat.features(img), obj.fingerprint, obj).value().item();
  };
  std::vector<double> basis(pixels, 0.0), grad(pixels);
  const double s0 = s_of(basis);
  for (std::size_t p = 0; p < pixels; ++p) {
    basis[p] = 1.0;
    grad[p] = s_of(basis) - s0;
    basis[p] = 0.0;
  }

  synthesizer::SynthesisConfig cfg;
  cfg.iterations = iterations;
  cfg.canvas = canvas;
  cfg.augment = synthesizer::AugmentConfig::none();
  cfg.precision = synthesizer::Precision::kDouble;
  cfg.seed = seed;
  const auto result = synthesizer::synthesize(obj, feat, cfg);

  ad::Graph<double> g(false);
  const auto& fi = result.parameters;
  auto rendered = fi.render(g.constant(ad::Tensor<double>({2, 3, n, n}, fi.coeffs))).value();
  std::vector<double> moved(pixels);
  for (std::size_t p = 0; p < pixels; ++p) moved[p] = rendered[p] - synthesizer::kGrayLevel;

  // Direct-sum transforms with the same frequency weighting.
  const auto scale = synthesizer::frequency_scale(n, n);
  std::vector<double> cos_table(n), sin_table(n);
  for (std::size_t k = 0; k < n; ++k) {
    cos_table[k] = std::cos(2 * std::numbers::pi * double(k) / double(n));
    sin_table[k] = std::sin(2 * std::numbers::pi * double(k) / double(n));
  }
  const double step = double(iterations) * cfg.learning_rate;
  std::vector<double> expected(pixels, 0.0);
  std::vector<double> dre(plane), dim(plane);
  for (std::size_t c = 0; c < 3; ++c) {
    const double* gc = grad.data() + c * plane;
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = 0; v < n; ++v) {
        double re = 0, im = 0;
        for (std::size_t y = 0; y < n; ++y) {
          for (std::size_t x = 0; x < n; ++x) {
            const std::size_t k = (u * y + v * x) % n;
            re += gc[y * n + x] * cos_table[k];
            im -= gc[y * n + x] * sin_table[k];
          }
        }
        const double f = scale[u * n + v] / double(plane);
        re *= f, im *= f;
        dre[u * n + v] = step * re / (std::abs(re) + cfg.epsilon);
        dim[u * n + v] = step * im / (std::abs(im) + cfg.epsilon);
      }
    }
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        double acc = 0;
        for (std::size_t u = 0; u < n; ++u) {
          for (std::size_t v = 0; v < n; ++v) {
            const std::size_t k = (u * y + v * x) % n;
            acc += scale[u * n + v] * (dre[u * n + v] * cos_table[k] - dim[u * n + v] * sin_table[k]);
          }
        }
        expected[c * plane + y * n + x] = acc / double(plane);
      }
    }
  }

  LinearOptimumReport r;
  r.cosine_reference = cosine(moved, expected);
  r.cosine_gradient = cosine(moved, grad);
  r.s_first = result.trace.s.front();
  r.s_last = result.trace.s.back();
  r.nondecreasing = true;
  for (std::size_t i = 1; i < result.trace.s.size(); ++i) r.nondecreasing = r.nondecreasing && result.trace.s[i] >= result.trace.s[i - 1];
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace vwam::testing
