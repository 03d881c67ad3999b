#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vwam::encoder {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ColumnStats {
  Vector mean;
  Vector stddev;  // population std
};

enum class ConstantColumns {
  kError,
  // Constant columns are centred to zero and left with unit scale. Used for
  // feature matrices, where dead units are expected.
  kZero,
};

ColumnStats column_stats(const Matrix& m, ConstantColumns policy = ConstantColumns::kError);
Matrix apply_zscore(const Matrix& m, const ColumnStats& stats);

struct ZScored {
  Matrix z;
  ColumnStats stats;
};
ZScored zscore_columns(const Matrix& m, ConstantColumns policy = ConstantColumns::kError);

// Column block k holds the features lagged by lags[k] samples; rows before
// the start of the series are zero.
struct DesignMatrix {
  Matrix x;
  std::vector<std::size_t> lags;
  std::size_t features = 0;
  std::uint64_t fingerprint = 0;
};

DesignMatrix build_design(const Matrix& features, const std::vector<std::size_t>& lags,
                          std::uint64_t fingerprint = 0);

// count values spaced evenly in log10 between lo and hi inclusive.
std::vector<double> alpha_grid(std::size_t count = 15, double lo = 1.0, double hi = 1e10);
// Parses "count:lo:hi".
std::vector<double> parse_alpha_grid(const std::string& text);

// Ridge solutions for any alpha from one eigendecomposition, of XX^T when
// there are fewer rows than columns and of X^T X otherwise.
class RidgeSolver {
 public:
  explicit RidgeSolver(const Matrix& x);

  bool dual() const { return dual_; }
  const Vector& eigenvalues() const { return eigenvalues_; }

  // Coefficients (columns of X) x voxels at one alpha.
  Matrix solve(const Matrix& y, double alpha) const;
  // Column v solved at alphas[v].
  Matrix solve(const Matrix& y, std::span<const double> alphas) const;

 private:
  Matrix x_;
  bool dual_;
  Vector eigenvalues_;
  Matrix eigenvectors_;
};

struct CvConfig {
  std::size_t splits = 10;
  std::size_t resamples = 10;
  std::uint64_t seed = 0;
};

struct VoxelWeights {
  std::size_t voxel = 0;
  Vector beta;
  double alpha = 0.0;
  double cv_score = 0.0;
};

struct RidgeFit {
  std::vector<VoxelWeights> voxels;
  std::vector<double> alphas;
  Matrix cv_scores;  // alphas x voxels, mean held-out R^2

  Matrix betas() const;  // coefficients x voxels
};

// Held-out folds of one resample: `splits` contiguous blocks of the sample
// sequence rotated by a seeded offset (offset 0 for the first resample).
std::vector<std::vector<std::size_t>> cv_folds(std::size_t samples, const CvConfig& cv, std::size_t resample);

RidgeFit fit_ridge(const Matrix& x, const Matrix& y, std::span<const double> alphas, const CvConfig& cv);

struct NoiseCeiling {
  Vector r_bar;
  Vector p_value;
  std::vector<bool> mask;
  // Empty when the voxel was evaluated; otherwise why it was excluded.
  std::vector<std::string> excluded;
};

struct CeilingConfig {
  std::size_t permutations = 1000;
  double threshold = 0.05;
  std::uint64_t seed = 0;
};

// repeats: R matrices of samples x voxels. r_bar is the mean Pearson
// correlation over all repeat pairs; the p-value comes from a one-sided
// test against circularly shifted surrogates.
NoiseCeiling noise_ceiling(const std::vector<Matrix>& repeats, const CeilingConfig& cfg = {});

double pearson(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

struct Accuracy {
  Vector raw;
  Vector corrected;
};

inline constexpr double kCeilingFloor = 0.05;

// corrected = clamp(raw / max(r_bar, floor), -1, 1); equals raw when no
// ceiling is supplied.
Accuracy prediction_accuracy(const Matrix& predicted, const Matrix& actual, const NoiseCeiling* ceiling = nullptr,
                             double floor = kCeilingFloor);

// Everything needed to turn raw feature rows into predicted responses.
struct EncodingModel {
  ColumnStats feature_stats;
  std::vector<std::size_t> lags;
  std::uint64_t fingerprint = 0;
  RidgeFit fit;

  std::size_t feature_count() const { return static_cast<std::size_t>(feature_stats.mean.size()); }
  // Raw features (samples x F) -> predicted responses (samples x voxels).
  Matrix predict(const Matrix& features) const;
};

// z-scores features (constant columns zeroed) and responses, builds the
// lagged design and fits every voxel.
EncodingModel fit_encoding_model(const Matrix& features, const Matrix& responses, const std::vector<std::size_t>& lags,
                                 std::span<const double> alphas, const CvConfig& cv, std::uint64_t fingerprint = 0);

}  // namespace vwam::encoder
