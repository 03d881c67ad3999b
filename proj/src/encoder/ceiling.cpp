#include <cmath>
#include <random>

#include "vwam/encoder/encoder.hpp"
#include "vwam/error.hpp"

namespace vwam::encoder {

double pearson(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ShapeError("pearson: need two equal-length series of length >= 2");
  const Vector da = a.array() - a.mean();
  const Vector db = b.array() - b.mean();
  const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (!(denom > 0)) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(da.dot(db) / denom, -1.0, 1.0);
}

NoiseCeiling noise_ceiling(const std::vector<Matrix>& repeats, const CeilingConfig& cfg) {
  const std::size_t r_count = repeats.size();
  if (r_count < 2) throw ConfigError("noise_ceiling: need at least 2 repeats");
  const Eigen::Index n = repeats[0].rows(), voxels = repeats[0].cols();
  for (const auto& m : repeats) {
    if (m.rows() != n || m.cols() != voxels) throw ShapeError("noise_ceiling: repeats differ in shape");
  }
  if (n < 3) throw ShapeError("noise_ceiling: need at least 3 samples");

  NoiseCeiling out;
  out.r_bar = Vector::Zero(voxels);
  out.p_value = Vector::Ones(voxels);
  out.mask.assign(static_cast<std::size_t>(voxels), false);
  out.excluded.assign(static_cast<std::size_t>(voxels), "");

  // Standardized series per voxel, so correlation of any pair under any
  // circular shift is a mean of products.
  std::vector<std::vector<Vector>> z(static_cast<std::size_t>(voxels), std::vector<Vector>(r_count));
  std::vector<char> usable(static_cast<std::size_t>(voxels), 1);
  for (Eigen::Index v = 0; v < voxels; ++v) {
    for (std::size_t r = 0; r < r_count; ++r) {
      const Vector s = repeats[r].col(v);
      if (!s.allFinite()) {
        usable[v] = 0;
        out.excluded[v] = "non-finite response in repeat " + std::to_string(r);
        break;
      }
      const Vector c = s.array() - s.mean();
      const double sd = std::sqrt(c.squaredNorm() / static_cast<double>(n));
      if (!(sd > 1e-12 * std::max(1.0, std::abs(s.mean())))) {
        usable[v] = 0;
        out.excluded[v] = "constant series in repeat " + std::to_string(r);
        break;
      }
      z[v][r] = c / sd;
    }
  }

  const double pairs = static_cast<double>(r_count * (r_count - 1) / 2);
  auto mean_pair_corr = [&](Eigen::Index v, const std::vector<std::size_t>& shift) {
    double total = 0.0;
    for (std::size_t a = 0; a < r_count; ++a) {
      for (std::size_t b = a + 1; b < r_count; ++b) {
        const Vector& za = z[v][a];
        const Vector& zb = z[v][b];
        double acc = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
          acc += za((t + shift[a]) % n) * zb((t + shift[b]) % n);
        }
        total += std::clamp(acc / static_cast<double>(n), -1.0, 1.0);
      }
    }
    return total / pairs;
  };

  const std::vector<std::size_t> none(r_count, 0);
  for (Eigen::Index v = 0; v < voxels; ++v) {
    out.r_bar(v) = usable[v] ? mean_pair_corr(v, none) : std::numeric_limits<double>::quiet_NaN();
  }

  std::vector<std::size_t> exceed(static_cast<std::size_t>(voxels), 0);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> shift(r_count, 0);
  for (std::size_t perm = 0; perm < cfg.permutations; ++perm) {
    for (std::size_t r = 1; r < r_count; ++r) shift[r] = 1 + static_cast<std::size_t>(rng() % (n - 1));
    for (Eigen::Index v = 0; v < voxels; ++v) {
      if (usable[v] && mean_pair_corr(v, shift) >= out.r_bar(v)) ++exceed[v];
    }
  }
  for (Eigen::Index v = 0; v < voxels; ++v) {
    if (!usable[v]) continue;
    out.p_value(v) = (1.0 + static_cast<double>(exceed[v])) / (1.0 + static_cast<double>(cfg.permutations));
    out.mask[v] = out.p_value(v) < cfg.threshold;
  }
  return out;
}

Accuracy prediction_accuracy(const Matrix& predicted, const Matrix& actual, const NoiseCeiling* ceiling, double floor) {
  if (predicted.rows() != actual.rows() || predicted.cols() != actual.cols()) {
    throw ShapeError("prediction_accuracy: shapes differ");
  }
  if (ceiling != nullptr && ceiling->r_bar.size() != actual.cols()) {
    throw ShapeError("prediction_accuracy: ceiling has wrong voxel count");
  }
  Accuracy acc;
  acc.raw.resize(actual.cols());
  acc.corrected.resize(actual.cols());
  for (Eigen::Index v = 0; v < actual.cols(); ++v) {
    const double r = pearson(predicted.col(v), actual.col(v));
    if (std::isnan(r)) throw NumericError("prediction_accuracy: zero-variance series at voxel " + std::to_string(v));
    acc.raw(v) = r;
    if (ceiling == nullptr || std::isnan(ceiling->r_bar(v))) {
      acc.corrected(v) = r;
    } else {
      acc.corrected(v) = std::clamp(r / std::max(ceiling->r_bar(v), floor), -1.0, 1.0);
    }
  }
  return acc;
}

}  // namespace vwam::encoder
