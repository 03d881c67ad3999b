#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>

#include "vwam/autodiff/fft.hpp"
#include "vwam/synthesizer/synthesizer.hpp"
#include "vwam/util/rng.hpp"

namespace vwam::synthesizer {

namespace {

constexpr std::size_t kChannels = 3;

double frequency(std::size_t k, std::size_t n) {
  const double kk = k < (n + 1) / 2 ? double(k) : double(k) - double(n);
  return kk / double(n);
}

}  // namespace

InitMode parse_init_mode(const std::string& text) {
  if (text == "gray140") return InitMode::kGray140;
  if (text == "black_noise") return InitMode::kBlackNoise;
  throw ConfigError("unknown init mode '" + text + "' (expected gray140 or black_noise)");
}

std::string init_mode_name(InitMode mode) { return mode == InitMode::kGray140 ? "gray140" : "black_noise"; }

std::vector<double> frequency_scale(std::size_t height, std::size_t width) {
  const double floor = 1.0 / double(std::max(height, width));
  std::vector<double> scale(height * width);
  for (std::size_t u = 0; u < height; ++u) {
    const double fy = frequency(u, height);
    for (std::size_t v = 0; v < width; ++v) {
      const double fx = frequency(v, width);
      scale[u * width + v] = 1.0 / std::max(std::hypot(fy, fx), floor);
    }
  }
  return scale;
}

template <typename T>
ad::Tensor<T> FourierImage::scale_tensor() const {
  const auto plane = frequency_scale(height, width);
  std::vector<T> data(2 * kChannels * plane.size());
  for (std::size_t k = 0; k < 2 * kChannels; ++k) {
    std::transform(plane.begin(), plane.end(), data.begin() + k * plane.size(), [](double s) { return T(s); });
  }
  return ad::Tensor<T>({2, kChannels, height, width}, std::move(data));
}

template <typename T>
ad::Var<T> FourierImage::render(const ad::Var<T>& coefficients) const {
  const ad::Shape expected{2, kChannels, height, width};
  if (coefficients.shape() != expected) {
    throw ShapeError("Fourier coefficients must be " + ad::shape_str(expected) + ", got " +
                     ad::shape_str(coefficients.shape()));
  }
  auto& g = coefficients.graph();
  auto spectrum = ad::mul(coefficients, g.constant(scale_tensor<T>()));
  auto pixels = ad::complex_magnitude(ad::inverse_fft2(spectrum));
  if (color) pixels = ad::channel_mix(pixels, std::span<const double>(*color), kChannels);
  return pixels;
}

io::Image FourierImage::render() const {
  ad::Graph<double> g(false);
  auto c = g.constant(ad::Tensor<double>({2, kChannels, height, width}, coeffs));
  return render(c).value().cast<float>();
}

FourierImage init(InitMode mode, std::size_t size, std::uint64_t seed) {
  if (size < 32) throw ConfigError("canvas size must be at least 32, got " + std::to_string(size));
  FourierImage img;
  img.height = img.width = size;
  const std::size_t plane = size * size;
  img.coeffs.assign(2 * kChannels * plane, 0.0);
  const auto scale = frequency_scale(size, size);

  if (mode == InitMode::kGray140) {
    for (std::size_t c = 0; c < kChannels; ++c) img.coeffs[c * plane] = double(plane) * kGrayLevel / scale[0];
    return img;
  }

  // The noise field itself is the inverse transform of its spectrum, so the
  // rendered magnitude is |noise|.
  util::CounterRng rng(seed, 0);
  std::vector<std::complex<double>> buf(plane);
  for (std::size_t c = 0; c < kChannels; ++c) {
    for (auto& z : buf) z = {kBlackNoiseStd * rng.normal(), 0.0};
    ad::dft2d(buf.data(), size, size, ad::FftDirection::kForward);
    for (std::size_t i = 0; i < plane; ++i) {
      img.coeffs[c * plane + i] = buf[i].real() / scale[i];
      img.coeffs[(kChannels + c) * plane + i] = buf[i].imag() / scale[i];
    }
  }
  return img;
}

FourierImage decorrelate_colors(const FourierImage& image, const ColorMatrix& matrix) {
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = matrix[r * 3 + c];
  if (!m.allFinite()) throw ConfigError("color matrix has non-finite entries");
  const double norm = m.norm();
  if (norm == 0.0 || std::abs(m.determinant()) <= 1e-12 * norm * norm * norm) {
    throw ConfigError("color matrix is singular");
  }
  FourierImage out = image;
  out.color = matrix;
  return out;
}

ColorMatrix color_cholesky(std::span<const io::Image> frames) {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Matrix3d outer = Eigen::Matrix3d::Zero();
  double count = 0;
  for (const auto& f : frames) {
    if (f.rank() != 3 || f.dim(0) != kChannels) throw ShapeError("frames must be [3, H, W], got " + ad::shape_str(f.shape()));
    const std::size_t plane = f.dim(1) * f.dim(2);
    const auto d = f.data();
    for (std::size_t i = 0; i < plane; ++i) {
      const Eigen::Vector3d p(d[i], d[plane + i], d[2 * plane + i]);
      sum += p;
      outer += p * p.transpose();
    }
    count += double(plane);
  }
  if (count < 2) throw ConfigError("color covariance needs at least two pixels");
  const Eigen::Vector3d mu = sum / count;
  const Eigen::Matrix3d cov = outer / count - mu * mu.transpose();
  Eigen::LLT<Eigen::Matrix3d> llt(cov);
  if (llt.info() != Eigen::Success) throw NumericError("RGB covariance is not positive definite");
  const Eigen::Matrix3d l = llt.matrixL();
  ColorMatrix out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out[r * 3 + c] = l(r, c);
  return out;
}

template ad::Tensor<float> FourierImage::scale_tensor<float>() const;
template ad::Tensor<double> FourierImage::scale_tensor<double>() const;
template ad::Var<float> FourierImage::render<float>(const ad::Var<float>&) const;
template ad::Var<double> FourierImage::render<double>(const ad::Var<double>&) const;

}  // namespace vwam::synthesizer
