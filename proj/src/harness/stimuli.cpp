#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#include "vwam/autodiff/fft.hpp"
#include "vwam/harness/harness.hpp"
#include "vwam/util/rng.hpp"

namespace vwam::harness {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

constexpr double kPi = std::numbers::pi;

struct Rgb {
  double r, g, b;
};

Rgb random_color(util::CounterRng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

void put(std::vector<float>& px, std::size_t plane, std::size_t i, Rgb c) {
  px[i] = float(std::clamp(c.r, 0.0, 1.0));
  px[plane + i] = float(std::clamp(c.g, 0.0, 1.0));
  px[2 * plane + i] = float(std::clamp(c.b, 0.0, 1.0));
}

// Three 1/f^a fields, each standardized, mixed through a random color matrix.
void smooth_noise(util::CounterRng& rng, std::size_t n, std::vector<float>& px) {
  const std::size_t plane = n * n;
  const double exponent = rng.uniform(1.0, 2.5);
  const double contrast = rng.uniform(0.1, 0.25);
  std::vector<std::vector<double>> fields(3, std::vector<double>(plane));
  std::vector<std::complex<double>> buf(plane);
  for (auto& field : fields) {
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = 0; v < n; ++v) {
        const double fy = double(u < n / 2 ? u : n - u), fx = double(v < n / 2 ? v : n - v);
        const double f = std::hypot(fy, fx);
        const double amp = f == 0 ? 0.0 : std::pow(f, -exponent);
        buf[u * n + v] = {amp * rng.normal(), amp * rng.normal()};
      }
    }
    ad::dft2d(buf.data(), n, n, ad::FftDirection::kInverse);
    double s = 0, ss = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      field[i] = buf[i].real();
      s += field[i];
      ss += field[i] * field[i];
    }
    const double mean = s / double(plane);
    const double sd = std::sqrt(std::max(ss / double(plane) - mean * mean, 1e-30));
    for (auto& x : field) x = (x - mean) / sd;
  }
  double mix[9];
  for (int i = 0; i < 9; ++i) mix[i] = (i % 4 == 0 ? 1.0 : 0.0) + 0.6 * rng.normal();
  const Rgb base{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7)};
  for (std::size_t i = 0; i < plane; ++i) {
    const double a = fields[0][i], b = fields[1][i], c = fields[2][i];
    put(px, plane, i,
        {base.r + contrast * (mix[0] * a + mix[1] * b + mix[2] * c),
         base.g + contrast * (mix[3] * a + mix[4] * b + mix[5] * c),
         base.b + contrast * (mix[6] * a + mix[7] * b + mix[8] * c)});
  }
}

void grating(util::CounterRng& rng, std::size_t n, std::vector<float>& px) {
  const std::size_t plane = n * n;
  const double theta = rng.uniform(0, kPi);
  const double cycles = rng.uniform(1.0, 12.0);
  const double phase = rng.uniform(0, 2 * kPi);
  const bool square = rng.uniform() < 0.3;
  const Rgb a = random_color(rng), b = random_color(rng);
  const double k = 2 * kPi * cycles / double(n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double w = std::sin(k * (double(x) * std::cos(theta) + double(y) * std::sin(theta)) + phase);
      if (square) w = w >= 0 ? 1.0 : -1.0;
      const double t = 0.5 + 0.5 * w;
      put(px, plane, y * n + x, {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t});
    }
  }
}

void blobs(util::CounterRng& rng, std::size_t n, std::vector<float>& px) {
  const std::size_t plane = n * n;
  const Rgb bg = random_color(rng);
  std::vector<Rgb> img(plane, bg);
  const auto count = rng.integer(1, 5);
  for (std::int64_t k = 0; k < count; ++k) {
    const double cy = rng.uniform(0, double(n)), cx = rng.uniform(0, double(n));
    const double radius = rng.uniform(0.05, 0.25) * double(n);
    const Rgb c = random_color(rng);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double d2 = (double(y) - cy) * (double(y) - cy) + (double(x) - cx) * (double(x) - cx);
        const double a = std::exp(-d2 / (2 * radius * radius));
        auto& p = img[y * n + x];
        p = {p.r + a * (c.r - p.r), p.g + a * (c.g - p.g), p.b + a * (c.b - p.b)};
      }
    }
  }
  for (std::size_t i = 0; i < plane; ++i) put(px, plane, i, img[i]);
}

}  // namespace

StimulusKind stimulus_kind(std::uint64_t seed, std::uint64_t index) {
  util::CounterRng rng(seed, index);
  return static_cast<StimulusKind>(rng.integer(0, 2));
}

io::Image make_stimulus(std::size_t size, std::uint64_t seed, std::uint64_t index) {
  if (size < 2) throw ConfigError("stimulus size must be at least 2");
  util::CounterRng rng(seed, index);
  const auto kind = static_cast<StimulusKind>(rng.integer(0, 2));
  std::vector<float> px(3 * size * size);
  switch (kind) {
    case StimulusKind::kSmoothNoise: smooth_noise(rng, size, px); break;
    case StimulusKind::kGrating: grating(rng, size, px); break;
    case StimulusKind::kBlobs: blobs(rng, size, px); break;
  }
  return io::Image({3, size, size}, std::move(px));
}

Matrix stimulus_features(const featurizer::Featurizer& feat, std::uint64_t seed, std::size_t first, std::size_t count,
                         std::size_t threads) {
  const std::size_t size = feat.backbone().spec().input_size;
  Matrix out(Eigen::Index(count), Eigen::Index(feat.layout().total));
  parallel_for(count, threads, [&](std::size_t i) {
    const auto f = feat.compute(make_stimulus(size, seed, first + i));
    for (std::size_t k = 0; k < f.size(); ++k) out(Eigen::Index(i), Eigen::Index(k)) = f[k];
  });
  return out;
}

}  // namespace vwam::harness
