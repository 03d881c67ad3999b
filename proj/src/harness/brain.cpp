#include <algorithm>
#include <cmath>
#include <numeric>

#include "vwam/harness/harness.hpp"
#include "vwam/util/rng.hpp"

namespace vwam::harness {

namespace {

constexpr double kMaxPrototypeCosine = 0.1;
constexpr std::size_t kPrototypeAttempts = 1000;
constexpr std::uint64_t kNoiseSalt = 0x6e6f697365ull;
constexpr std::uint64_t kVoxelSalt = 0x766f78656cull;

double cosine(const Vector& a, const Vector& b) {
  const double d = a.norm() * b.norm();
  return d == 0 ? 0.0 : a.dot(b) / d;
}

}  // namespace

Matrix SyntheticBrain::lagged_readout() const {
  const Eigen::Index f = readout.cols();
  Matrix out(readout.rows(), f * Eigen::Index(lags.size()));
  for (std::size_t k = 0; k < lags.size(); ++k) out.middleCols(Eigen::Index(k) * f, f) = lag_kernel[k] * readout;
  return out;
}

Matrix SyntheticBrain::signal(const Matrix& features) const {
  if (std::size_t(features.cols()) != this->features()) {
    throw ShapeError("brain expects " + std::to_string(this->features()) + " features, got " +
                     std::to_string(features.cols()));
  }
  const Matrix s = encoder::apply_zscore(features, feature_stats) * readout.transpose();
  Matrix y = Matrix::Zero(s.rows(), s.cols());
  for (std::size_t k = 0; k < lags.size(); ++k) {
    const auto lag = Eigen::Index(lags[k]);
    if (lag >= s.rows()) continue;
    y.bottomRows(s.rows() - lag) += lag_kernel[k] * s.topRows(s.rows() - lag);
  }
  return y;
}

Matrix SyntheticBrain::respond(const Matrix& features, std::uint64_t stream) const {
  Matrix y = signal(features);
  util::CounterRng rng(subject_seed ^ kNoiseSalt, stream);
  for (Eigen::Index t = 0; t < y.rows(); ++t)
    for (Eigen::Index v = 0; v < y.cols(); ++v) y(t, v) += sigma(v) * rng.normal();
  return y;
}

Vector SyntheticBrain::static_response(const Vector& features) const {
  if (std::size_t(features.size()) != this->features()) throw ShapeError("brain: feature length mismatch");
  const Vector z = (features - feature_stats.mean).cwiseQuotient(feature_stats.stddev);
  const double gain = std::accumulate(lag_kernel.begin(), lag_kernel.end(), 0.0);
  return gain * (readout * z);
}

Vector SyntheticBrain::roi_response(const Vector& features) const {
  const Vector v = static_response(features);
  const auto names = rois.names();
  Vector out(Eigen::Index(names.size()));
  for (std::size_t r = 0; r < names.size(); ++r) {
    const auto idx = rois.voxels(names[r]);
    double s = 0;
    for (auto i : idx) s += v(Eigen::Index(i));
    out(Eigen::Index(r)) = s / double(idx.size());
  }
  return out;
}

SyntheticBrain make_brain(const featurizer::Layout& layout, const Matrix& calibration, const BrainConfig& cfg,
                          const std::vector<std::string>& roi_names) {
  if (cfg.rois == 0) throw ConfigError("brain needs at least one ROI");
  if (cfg.voxels < cfg.rois) {
    throw ConfigError("brain: " + std::to_string(cfg.voxels) + " voxels cannot fill " + std::to_string(cfg.rois) +
                      " ROIs (an ROI would be empty)");
  }
  if (!(cfg.sparsity > 0 && cfg.sparsity <= 1)) throw ConfigError("brain sparsity must lie in (0, 1]");
  if (cfg.lags.empty() || cfg.lags.size() != cfg.lag_kernel.size()) {
    throw ConfigError("brain lag kernel must have one weight per lag");
  }
  if (!(cfg.sigma >= 0) || !(cfg.jitter >= 0)) throw ConfigError("brain noise and jitter must be non-negative");
  if (std::size_t(calibration.cols()) != layout.total || calibration.rows() < 2) {
    throw ShapeError("brain calibration set must be samples x " + std::to_string(layout.total) + " with >= 2 rows");
  }
  if (layout.segments.empty()) throw ConfigError("brain: feature layout has no segments");

  SyntheticBrain brain;
  brain.layout = layout;
  brain.lag_kernel = cfg.lag_kernel;
  brain.lags = cfg.lags;
  brain.subject_seed = cfg.subject_seed;
  brain.feature_stats = encoder::column_stats(calibration, encoder::ConstantColumns::kZero);
  const Matrix z = encoder::apply_zscore(calibration, brain.feature_stats);

  std::vector<char> live(layout.total);
  for (std::size_t f = 0; f < layout.total; ++f) {
    live[f] = calibration.col(Eigen::Index(f)).maxCoeff() > calibration.col(Eigen::Index(f)).minCoeff();
  }

  const std::size_t nseg = layout.segments.size();
  const std::size_t band = std::clamp<std::size_t>(cfg.band, 1, nseg);
  const std::size_t F = layout.total;
  for (std::size_t r = 0; r < cfg.rois; ++r) {
    const std::size_t first =
        cfg.rois == 1 ? 0 : (r * (nseg - band) + (cfg.rois - 1) / 2) / (cfg.rois - 1);
    const std::size_t lo = layout.segments[first].offset;
    const auto& last = layout.segments[first + band - 1];
    const std::size_t hi = last.offset + last.length;

    util::CounterRng rng(cfg.structure_seed, r);
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kPrototypeAttempts && !placed; ++attempt) {
      Vector p = Vector::Zero(Eigen::Index(F));
      for (std::size_t f = lo; f < hi; ++f) {
        if (live[f] && rng.uniform() < cfg.sparsity) p(Eigen::Index(f)) = rng.normal();
      }
      if (p.squaredNorm() == 0) continue;
      placed = std::all_of(brain.prototypes.begin(), brain.prototypes.end(),
                           [&](const Vector& q) { return std::abs(cosine(p, q)) < kMaxPrototypeCosine; });
      if (placed) brain.prototypes.push_back(std::move(p));
    }
    if (!placed) throw ConfigError("could not draw separable prototypes for ROI " + std::to_string(r));
  }

  brain.readout.resize(Eigen::Index(cfg.voxels), Eigen::Index(F));
  brain.rois.labels.resize(cfg.voxels);
  for (std::size_t v = 0; v < cfg.voxels; ++v) {
    const std::size_t r = v * cfg.rois / cfg.voxels;
    brain.rois.labels[v] = r < roi_names.size() ? roi_names[r] : "roi" + std::to_string(r);
    const Vector& p = brain.prototypes[r];
    const double rms = std::sqrt(p.squaredNorm() / double((p.array() != 0).count()));
    util::CounterRng rng(cfg.subject_seed ^ kVoxelSalt, v);
    Vector w = p;
    for (Eigen::Index f = 0; f < w.size(); ++f) {
      if (p(f) != 0) w(f) += cfg.jitter * rms * rng.normal();
    }
    const Vector s = z * w;
    const double sd = std::sqrt((s.array() - s.mean()).square().mean());
    if (!(sd > 0)) throw NumericError("voxel " + std::to_string(v) + " has no signal on the calibration set");
    brain.readout.row(Eigen::Index(v)) = w / sd;
  }
  brain.sigma = Vector::Constant(Eigen::Index(cfg.voxels), cfg.sigma);
  return brain;
}

double median_noise_ceiling(const SyntheticBrain& brain, const Matrix& features, double sigma, std::size_t repeats,
                            std::uint64_t first_stream) {
  if (repeats < 2) throw ConfigError("noise ceiling needs at least 2 repeats");
  SyntheticBrain b = brain;
  b.sigma.setConstant(sigma);
  std::vector<Matrix> reps;
  for (std::size_t r = 0; r < repeats; ++r) reps.push_back(b.respond(features, first_stream + r));
  std::vector<double> rbar(b.voxels(), 0.0);
  for (std::size_t v = 0; v < b.voxels(); ++v) {
    double s = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < repeats; ++i)
      for (std::size_t j = i + 1; j < repeats; ++j, ++pairs)
        s += encoder::pearson(reps[i].col(Eigen::Index(v)), reps[j].col(Eigen::Index(v)));
    rbar[v] = s / double(pairs);
  }
  auto mid = rbar.begin() + std::ptrdiff_t(rbar.size() / 2);
  std::nth_element(rbar.begin(), mid, rbar.end());
  if (rbar.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(rbar.begin(), mid));
}

Calibration calibrate_sigma(const SyntheticBrain& brain, const Matrix& test_features, std::size_t repeats,
                            double target, std::uint64_t first_stream) {
  if (!(target > 0 && target < 1)) throw ConfigError("calibration target must lie in (0, 1)");
  Calibration cal;
  for (double s : {0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0}) {
    cal.table.push_back({s, median_noise_ceiling(brain, test_features, s, repeats, first_stream)});
  }
  double lo = std::log(1e-3), hi = std::log(1e3);
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (median_noise_ceiling(brain, test_features, std::exp(mid), repeats, first_stream) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  cal.sigma = std::exp(0.5 * (lo + hi));
  cal.median_r_bar = median_noise_ceiling(brain, test_features, cal.sigma, repeats, first_stream);
  return cal;
}

}  // namespace vwam::harness
