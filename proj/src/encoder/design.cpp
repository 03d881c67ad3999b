#include <cmath>

#include "vwam/encoder/encoder.hpp"
#include "vwam/error.hpp"
#include "vwam/util/text.hpp"

namespace vwam::encoder {

ColumnStats column_stats(const Matrix& m, ConstantColumns policy) {
  if (m.rows() < 2) throw ShapeError("zscore: need at least 2 samples, got " + std::to_string(m.rows()));
  if (!m.allFinite()) throw NumericError("zscore: matrix contains non-finite values");
  ColumnStats s;
  s.mean = m.colwise().mean().transpose();
  s.stddev.resize(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double var = (m.col(c).array() - s.mean(c)).square().mean();
    const double sd = std::sqrt(var);
    // Relative threshold so a constant column with rounding noise still counts.
    if (!(sd > 1e-12 * std::max(1.0, std::abs(s.mean(c))))) {
      if (policy == ConstantColumns::kError) {
        throw NumericError("zscore: column " + std::to_string(c) + " has zero variance");
      }
      s.stddev(c) = 1.0;
      continue;
    }
    s.stddev(c) = sd;
  }
  return s;
}

Matrix apply_zscore(const Matrix& m, const ColumnStats& stats) {
  if (m.cols() != stats.mean.size()) {
    throw ShapeError("zscore: matrix has " + std::to_string(m.cols()) + " columns, stats have " +
                     std::to_string(stats.mean.size()));
  }
  return (m.rowwise() - stats.mean.transpose()).array().rowwise() / stats.stddev.transpose().array();
}

ZScored zscore_columns(const Matrix& m, ConstantColumns policy) {
  ZScored out;
  out.stats = column_stats(m, policy);
  out.z = apply_zscore(m, out.stats);
  return out;
}

DesignMatrix build_design(const Matrix& features, const std::vector<std::size_t>& lags, std::uint64_t fingerprint) {
  if (lags.empty()) throw ConfigError("build_design: no lags");
  const auto n = static_cast<std::size_t>(features.rows());
  const auto f = static_cast<std::size_t>(features.cols());
  DesignMatrix d;
  d.lags = lags;
  d.features = f;
  d.fingerprint = fingerprint;
  d.x = Matrix::Zero(n, f * lags.size());
  for (std::size_t k = 0; k < lags.size(); ++k) {
    const std::size_t lag = lags[k];
    if (lag < 1) throw ConfigError("build_design: lags must be >= 1");
    if (lag >= n) {
      throw ConfigError("build_design: lag " + std::to_string(lag) + " >= sequence length " + std::to_string(n));
    }
    d.x.block(lag, k * f, n - lag, f) = features.topRows(n - lag);
  }
  return d;
}

std::vector<double> alpha_grid(std::size_t count, double lo, double hi) {
  if (count == 0 || !(lo > 0) || !(hi >= lo)) throw ConfigError("alpha grid: need count >= 1 and 0 < lo <= hi");
  if (count == 1) return {lo};
  const double a = std::log10(lo), b = std::log10(hi);
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    out[k] = std::pow(10.0, a + ((b - a) * static_cast<double>(k)) / static_cast<double>(count - 1));
  }
  return out;
}

std::vector<double> parse_alpha_grid(const std::string& text) {
  const auto parts = util::split(text, ':');
  if (parts.size() != 3) throw ConfigError("alpha grid: expected count:lo:hi, got '" + text + "'");
  return alpha_grid(util::parse_size(parts[0], "alpha count"), util::parse_double(parts[1], "alpha lo"),
                    util::parse_double(parts[2], "alpha hi"));
}

}  // namespace vwam::encoder
