#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "vwam/encoder/encoder.hpp"
#include "vwam/error.hpp"

namespace vwam::encoder {
namespace {

struct Eig {
  Vector values;
  Matrix vectors;
};

Eig eig_sym(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
  if (solver.info() != Eigen::Success) throw NumericError("ridge: eigendecomposition failed");
  return {solver.eigenvalues().cwiseMax(0.0), solver.eigenvectors()};
}

// 1 / (lambda + alpha), refusing numerically singular systems.
Vector shrink(const Vector& lambda, double alpha, std::size_t voxel) {
  const double scale = std::max(lambda.maxCoeff(), 1.0);
  const double tiny = scale * static_cast<double>(lambda.size()) * std::numeric_limits<double>::epsilon();
  Vector out(lambda.size());
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    const double d = lambda(i) + alpha;
    if (!(d > tiny)) {
      throw NumericError("ridge: singular system at alpha=" + std::to_string(alpha) + " (voxel " +
                         std::to_string(voxel) + ")");
    }
    out(i) = 1.0 / d;
  }
  return out;
}

}  // namespace

RidgeSolver::RidgeSolver(const Matrix& x) : x_(x), dual_(x.rows() < x.cols()) {
  if (x.rows() == 0 || x.cols() == 0) throw ShapeError("ridge: empty design matrix");
  if (!x.allFinite()) throw NumericError("ridge: design matrix contains non-finite values");
  const Matrix gram = dual_ ? Matrix(x * x.transpose()) : Matrix(x.transpose() * x);
  Eig e = eig_sym(gram);
  eigenvalues_ = std::move(e.values);
  eigenvectors_ = std::move(e.vectors);
}

Matrix RidgeSolver::solve(const Matrix& y, double alpha) const {
  std::vector<double> alphas(static_cast<std::size_t>(y.cols()), alpha);
  return solve(y, alphas);
}

Matrix RidgeSolver::solve(const Matrix& y, std::span<const double> alphas) const {
  if (y.rows() != x_.rows()) throw ShapeError("ridge: response rows differ from design rows");
  if (static_cast<Eigen::Index>(alphas.size()) != y.cols()) throw ShapeError("ridge: one alpha per voxel required");
  if (!y.allFinite()) throw NumericError("ridge: responses contain non-finite values");
  // Dual:   beta = X^T U diag(1/(l+a)) U^T y
  // Primal: beta = V diag(1/(l+a)) V^T X^T y
  const Matrix rotated = dual_ ? Matrix(eigenvectors_.transpose() * y) : Matrix(eigenvectors_.transpose() * (x_.transpose() * y));
  Matrix scaled(rotated.rows(), rotated.cols());
  std::map<double, Vector> cache;
  for (Eigen::Index v = 0; v < y.cols(); ++v) {
    auto it = cache.find(alphas[v]);
    if (it == cache.end()) it = cache.emplace(alphas[v], shrink(eigenvalues_, alphas[v], v)).first;
    scaled.col(v) = rotated.col(v).cwiseProduct(it->second);
  }
  if (dual_) return x_.transpose() * (eigenvectors_ * scaled);
  return eigenvectors_ * scaled;
}

Matrix RidgeFit::betas() const {
  if (voxels.empty()) return {};
  Matrix out(voxels[0].beta.size(), static_cast<Eigen::Index>(voxels.size()));
  for (std::size_t v = 0; v < voxels.size(); ++v) out.col(v) = voxels[v].beta;
  return out;
}

std::vector<std::vector<std::size_t>> cv_folds(std::size_t samples, const CvConfig& cv, std::size_t resample) {
  if (cv.splits < 2 || cv.splits > samples) {
    throw ConfigError("cv: splits must be in [2, samples], got " + std::to_string(cv.splits));
  }
  std::size_t offset = 0;
  if (resample > 0) {
    std::mt19937_64 rng(cv.seed);
    for (std::size_t r = 0; r < resample; ++r) offset = static_cast<std::size_t>(rng() % samples);
  }
  std::vector<std::vector<std::size_t>> folds(cv.splits);
  for (std::size_t s = 0; s < cv.splits; ++s) {
    const std::size_t lo = s * samples / cv.splits, hi = (s + 1) * samples / cv.splits;
    for (std::size_t j = lo; j < hi; ++j) folds[s].push_back((j + offset) % samples);
  }
  return folds;
}

RidgeFit fit_ridge(const Matrix& x, const Matrix& y, std::span<const double> alphas, const CvConfig& cv) {
  const Eigen::Index n = x.rows(), p = x.cols(), voxels = y.cols();
  if (y.rows() != n) throw ShapeError("fit_ridge: X has " + std::to_string(n) + " rows, Y has " + std::to_string(y.rows()));
  if (alphas.empty()) throw ConfigError("fit_ridge: empty alpha grid");
  for (Eigen::Index v = 0; v < voxels; ++v) {
    if (!y.col(v).allFinite()) throw NumericError("fit_ridge: NaN in responses of voxel " + std::to_string(v));
  }
  if (!x.allFinite()) throw NumericError("fit_ridge: design matrix contains non-finite values");
  if (cv.resamples == 0) throw ConfigError("fit_ridge: resamples must be >= 1");

  const auto na = static_cast<Eigen::Index>(alphas.size());
  Matrix scores = Matrix::Zero(na, voxels);
  const bool dual = n < p;
  const Matrix gram = dual ? Matrix(x * x.transpose()) : Matrix(x.transpose() * x);
  std::size_t folds_done = 0;

  for (std::size_t r = 0; r < cv.resamples; ++r) {
    for (const auto& test : cv_folds(static_cast<std::size_t>(n), cv, r)) {
      std::vector<char> is_test(static_cast<std::size_t>(n), 0);
      for (auto i : test) is_test[i] = 1;
      std::vector<Eigen::Index> train;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!is_test[i]) train.push_back(i);
      }
      const std::vector<Eigen::Index> held(test.begin(), test.end());
      const Matrix y_train = y(train, Eigen::placeholders::all);
      const Matrix y_test = y(held, Eigen::placeholders::all);

      // pred(alpha) = left * diag(1/(l+alpha)) * right
      Matrix left, right;
      Eig e;
      if (dual) {
        e = eig_sym(gram(train, train));
        left = gram(held, train) * e.vectors;
        right = e.vectors.transpose() * y_train;
      } else {
        const Matrix x_train = x(train, Eigen::placeholders::all);
        e = eig_sym(x_train.transpose() * x_train);
        left = x(held, Eigen::placeholders::all) * e.vectors;
        right = e.vectors.transpose() * (x_train.transpose() * y_train);
      }
      const Vector centred_ss = (y_test.rowwise() - y_test.colwise().mean()).colwise().squaredNorm().transpose();
      for (Eigen::Index a = 0; a < na; ++a) {
        const Vector d = shrink(e.values, alphas[a], 0);
        const Matrix pred = left * (d.asDiagonal() * right);
        const Vector ss_res = (y_test - pred).colwise().squaredNorm().transpose();
        for (Eigen::Index v = 0; v < voxels; ++v) {
          scores(a, v) += centred_ss(v) > 0 ? 1.0 - ss_res(v) / centred_ss(v) : 0.0;
        }
      }
      ++folds_done;
    }
  }
  scores /= static_cast<double>(folds_done);

  RidgeFit fit;
  fit.alphas.assign(alphas.begin(), alphas.end());
  fit.cv_scores = scores;
  std::vector<double> chosen(static_cast<std::size_t>(voxels));
  for (Eigen::Index v = 0; v < voxels; ++v) {
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < na; ++a) {
      // >= keeps the larger alpha on ties.
      if (scores(a, v) >= scores(best, v)) best = a;
    }
    chosen[v] = alphas[best];
    fit.voxels.push_back({static_cast<std::size_t>(v), Vector(), alphas[best], scores(best, v)});
  }
  const Matrix betas = RidgeSolver(x).solve(y, chosen);
  for (Eigen::Index v = 0; v < voxels; ++v) fit.voxels[v].beta = betas.col(v);
  return fit;
}

Matrix EncodingModel::predict(const Matrix& features) const {
  const DesignMatrix d = build_design(apply_zscore(features, feature_stats), lags, fingerprint);
  return d.x * fit.betas();
}

EncodingModel fit_encoding_model(const Matrix& features, const Matrix& responses, const std::vector<std::size_t>& lags,
                                 std::span<const double> alphas, const CvConfig& cv, std::uint64_t fingerprint) {
  if (features.rows() != responses.rows()) throw ShapeError("fit: feature and response sample counts differ");
  for (Eigen::Index v = 0; v < responses.cols(); ++v) {
    if (!responses.col(v).allFinite()) throw NumericError("fit: NaN in responses of voxel " + std::to_string(v));
  }
  EncodingModel model;
  ZScored f = zscore_columns(features, ConstantColumns::kZero);
  model.feature_stats = std::move(f.stats);
  model.lags = lags;
  model.fingerprint = fingerprint;
  const Matrix y = zscore_columns(responses).z;
  const DesignMatrix d = build_design(f.z, lags, fingerprint);
  model.fit = fit_ridge(d.x, y, alphas, cv);
  return model;
}

}  // namespace vwam::encoder
