#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "vwam/encoder/encoder.hpp"
#include "vwam/error.hpp"

namespace vwam::encoder {
namespace {

Matrix RandomMatrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Matrix DirectRidge(const Matrix& x, const Matrix& y, double alpha) {
  const Matrix a = x.transpose() * x + alpha * Matrix::Identity(x.cols(), x.cols());
  return a.fullPivLu().solve(x.transpose() * y);
}

double RelErr(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

TEST(ZScore, ClosedForm) {
  Matrix m(3, 1);
  m << 1, 2, 3;
  const auto z = zscore_columns(m);
  EXPECT_NEAR(z.z(0), -1.224744871391589, 1e-12);
  EXPECT_NEAR(z.z(1), 0.0, 1e-15);
  EXPECT_NEAR(z.z(2), 1.224744871391589, 1e-12);
  EXPECT_NEAR(z.stats.stddev(0), std::sqrt(2.0 / 3.0), 1e-15);
}

TEST(ZScore, IdempotentAndConstantColumns) {
  std::mt19937_64 rng(1);
  const Matrix z = zscore_columns(RandomMatrix(rng, 50, 4)).z;
  EXPECT_LT((zscore_columns(z).z - z).cwiseAbs().maxCoeff(), 1e-12);
  Matrix c(3, 2);
  c << 5, 1, 5, 2, 5, 3;
  try {
    zscore_columns(c);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("column 0"), std::string::npos);
  }
  const auto zero = zscore_columns(c, ConstantColumns::kZero);
  EXPECT_TRUE(zero.z.col(0).isZero());
  EXPECT_THROW(zscore_columns(Matrix::Ones(1, 3)), ShapeError);
}

TEST(ZScore, HeldOutDataReusesTrainingStats) {
  Matrix train(2, 1), test(1, 1);
  train << 0, 2;
  test << 4;
  const auto z = zscore_columns(train);
  EXPECT_DOUBLE_EQ(apply_zscore(test, z.stats)(0), 3.0);
}

TEST(Design, ShiftExamples) {
  Matrix f(4, 1);
  f << 1, 2, 3, 4;
  const auto d1 = build_design(f, {1});
  EXPECT_EQ(d1.x.col(0), (Vector(4) << 0, 1, 2, 3).finished());
  const auto d2 = build_design(f, {1, 2});
  ASSERT_EQ(d2.x.cols(), 2);
  EXPECT_EQ(d2.x.col(1), (Vector(4) << 0, 0, 1, 2).finished());
  EXPECT_THROW(build_design(f, {4}), ConfigError);
  EXPECT_THROW(build_design(f, {0}), ConfigError);
}

TEST(Design, LaggedProductIsACausalConvolution) {
  std::mt19937_64 rng(2);
  const Eigen::Index n = 30, feats = 3;
  const Matrix f = RandomMatrix(rng, n, feats);
  const double kernel[3] = {0.5, 0.3, 0.2};
  const Vector w = RandomMatrix(rng, feats, 1);
  Vector beta(3 * feats);
  for (int k = 0; k < 3; ++k) beta.segment(k * feats, feats) = kernel[k] * w;
  const Vector got = build_design(f, {1, 2, 3}).x * beta;
  const Vector drive = f * w;
  for (Eigen::Index t = 0; t < n; ++t) {
    double ref = 0.0;
    for (int k = 0; k < 3; ++k) {
      if (t - (k + 1) >= 0) ref += kernel[k] * drive(t - (k + 1));
    }
    EXPECT_NEAR(got(t), ref, 1e-12);
  }
}

TEST(AlphaGrid, MatchesPowersOfTen) {
  const auto g = alpha_grid();
  ASSERT_EQ(g.size(), 15u);
  for (int k = 0; k < 15; ++k) EXPECT_NEAR(g[k], std::pow(10.0, 10.0 * k / 14.0), 1e-15 * g[k]);
  EXPECT_EQ(g.front(), 1.0);
  EXPECT_EQ(g.back(), 1e10);
  EXPECT_EQ(parse_alpha_grid("15:1e0:1e10"), g);
  EXPECT_THROW(parse_alpha_grid("15:1"), ConfigError);
}

TEST(Ridge, IdentityDesign) {
  std::mt19937_64 rng(3);
  const Matrix y = RandomMatrix(rng, 6, 2);
  RidgeSolver s(Matrix::Identity(6, 6));
  EXPECT_LT((s.solve(y, 0.0) - y).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((s.solve(y, 1.0) - y / 2).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Ridge, EigenPathMatchesDirectSolve) {
  std::mt19937_64 rng(4);
  for (auto [n, p] : {std::pair<int, int>{40, 25}, {25, 40}}) {
    const Matrix x = RandomMatrix(rng, n, p);
    const Matrix y = RandomMatrix(rng, n, 5);
    RidgeSolver s(x);
    EXPECT_EQ(s.dual(), n < p);
    for (double a : alpha_grid()) EXPECT_LT(RelErr(s.solve(y, a), DirectRidge(x, y, a)), 1e-8) << a;
  }
}

TEST(Ridge, ShrinkageIsMonotone) {
  std::mt19937_64 rng(5);
  const auto grid = alpha_grid();
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix x = RandomMatrix(rng, 20 + trial % 15, 10 + trial % 20);
    const Matrix y = RandomMatrix(rng, x.rows(), 1);
    RidgeSolver s(x);
    double prev = std::numeric_limits<double>::infinity();
    for (double a : grid) {
      const double norm = s.solve(y, a).norm();
      EXPECT_LE(norm, prev * (1 + 1e-12));
      prev = norm;
    }
  }
}

TEST(Ridge, SingularSystemIsReported) {
  RidgeSolver s(Matrix::Zero(3, 5));
  EXPECT_THROW(s.solve(Matrix::Ones(3, 1), 0.0), NumericError);
  EXPECT_NO_THROW(s.solve(Matrix::Ones(3, 1), 1.0));
}

TEST(Folds, PartitionSamplesIntoContiguousBlocks) {
  CvConfig cv{10, 10, 7};
  for (std::size_t r = 0; r < cv.resamples; ++r) {
    const auto folds = cv_folds(103, cv, r);
    std::vector<int> seen(103, 0);
    for (const auto& f : folds) {
      ASSERT_GE(f.size(), 10u);
      for (std::size_t i = 0; i < f.size(); ++i) {
        ++seen[f[i]];
        if (i > 0) EXPECT_EQ(f[i], (f[i - 1] + 1) % 103);
      }
    }
    for (int s : seen) EXPECT_EQ(s, 1);
  }
  EXPECT_NE(cv_folds(103, cv, 1)[0][0], cv_folds(103, cv, 2)[0][0]);
  EXPECT_EQ(cv_folds(103, cv, 0)[0][0], 0u);
}

TEST(FitRidge, DeterministicAndTiesFavorLargerAlpha) {
  std::mt19937_64 rng(6);
  const Matrix x = zscore_columns(RandomMatrix(rng, 80, 30)).z;
  Matrix y = RandomMatrix(rng, 80, 4);
  y.col(1) = x.col(0) + 0.1 * y.col(1);
  y.col(3).setZero();
  const auto grid = alpha_grid();
  CvConfig cv{10, 3, 11};
  const auto a = fit_ridge(x, y, grid, cv);
  const auto b = fit_ridge(x, y, grid, cv);
  for (int v = 0; v < 4; ++v) {
    EXPECT_EQ(a.voxels[v].alpha, b.voxels[v].alpha);
    EXPECT_EQ(a.voxels[v].beta, b.voxels[v].beta);
  }
  // All-zero responses score 0 at every alpha.
  EXPECT_EQ(a.voxels[3].alpha, 1e10);
  EXPECT_GT(a.voxels[1].cv_score, 0.9);
  EXPECT_LT(a.voxels[1].alpha, 1e3);
  // Chosen alpha maximizes the stored CV score.
  for (int v = 0; v < 4; ++v) {
    EXPECT_EQ(a.voxels[v].cv_score, a.cv_scores.col(v).maxCoeff());
  }
  Matrix bad = y;
  bad(5, 2) = std::nan("");
  EXPECT_THROW(fit_ridge(x, bad, grid, cv), NumericError);
}

TEST(FitRidge, RecoversPlantedNoiselessModel) {
  std::mt19937_64 rng(7);
  const Matrix x = RandomMatrix(rng, 200, 40);
  const Matrix beta = RandomMatrix(rng, 40, 3);
  const Matrix y = x * beta;
  const std::vector<double> smallest{1.0};
  const auto fit = fit_ridge(x, y, smallest, CvConfig{10, 1, 0});
  for (int v = 0; v < 3; ++v) {
    const double cosine = fit.voxels[v].beta.dot(beta.col(v)) / (fit.voxels[v].beta.norm() * beta.col(v).norm());
    EXPECT_GE(cosine, 0.999);
  }
}

TEST(NoiseCeiling, IdenticalRepeats) {
  std::mt19937_64 rng(8);
  const Matrix a = RandomMatrix(rng, 100, 5);
  const auto nc = noise_ceiling({a, a, a}, {200, 0.05, 1});
  for (int v = 0; v < 5; ++v) {
    EXPECT_NEAR(nc.r_bar(v), 1.0, 1e-12);
    EXPECT_TRUE(nc.mask[v]);
  }
}

TEST(NoiseCeiling, TwoRepeatsGiveTheirCorrelation) {
  std::mt19937_64 rng(9);
  const Matrix a = RandomMatrix(rng, 60, 3);
  const Matrix b = a + RandomMatrix(rng, 60, 3);
  const auto nc = noise_ceiling({a, b}, {50, 0.05, 1});
  for (int v = 0; v < 3; ++v) EXPECT_NEAR(nc.r_bar(v), pearson(a.col(v), b.col(v)), 1e-12);
}

TEST(NoiseCeiling, WhiteNoiseFalsePositiveRate) {
  std::mt19937_64 rng(10);
  const int voxels = 1000;
  const auto nc = noise_ceiling({RandomMatrix(rng, 200, voxels), RandomMatrix(rng, 200, voxels)}, {1000, 0.05, 3});
  // sd of r at n=200 is about 0.07, so a handful of 1000 voxels pass 0.2.
  int hits = 0, small = 0;
  for (int v = 0; v < voxels; ++v) {
    small += std::abs(nc.r_bar(v)) < 0.2 ? 1 : 0;
    EXPECT_LT(std::abs(nc.r_bar(v)), 0.3);
    hits += nc.mask[v] ? 1 : 0;
  }
  EXPECT_GE(small, 980);
  EXPECT_GE(hits, 25);
  EXPECT_LE(hits, 75);
}

TEST(NoiseCeiling, ConstantSeriesExcluded) {
  std::mt19937_64 rng(11);
  Matrix a = RandomMatrix(rng, 50, 2), b = RandomMatrix(rng, 50, 2);
  b.col(1).setConstant(3.0);
  const auto nc = noise_ceiling({a, b}, {20, 0.05, 1});
  EXPECT_TRUE(nc.excluded[0].empty());
  EXPECT_FALSE(nc.excluded[1].empty());
  EXPECT_FALSE(nc.mask[1]);
  EXPECT_THROW(noise_ceiling({a}), ConfigError);
}

TEST(Accuracy, SignsAndCeilingCorrection) {
  std::mt19937_64 rng(12);
  const Matrix actual = RandomMatrix(rng, 80, 4);
  EXPECT_LT((prediction_accuracy(actual, actual).raw.array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_LT((prediction_accuracy(-actual, actual).raw.array() + 1.0).abs().maxCoeff(), 1e-12);

  const Matrix pred = actual + RandomMatrix(rng, 80, 4);
  NoiseCeiling nc;
  nc.r_bar = (Vector(4) << 0.5, 0.9, 1.0, 0.01).finished();
  const auto acc = prediction_accuracy(pred, actual, &nc);
  for (int v = 0; v < 3; ++v) EXPECT_NEAR(acc.corrected(v), std::min(1.0, acc.raw(v) / nc.r_bar(v)), 1e-12);
  EXPECT_NEAR(acc.corrected(3), std::min(1.0, acc.raw(3) / kCeilingFloor), 1e-12);
  Matrix flat = pred;
  flat.col(0).setConstant(1.0);
  EXPECT_THROW(prediction_accuracy(flat, actual), NumericError);
}

TEST(EncodingModel, PredictsHeldOutResponses) {
  std::mt19937_64 rng(13);
  const Matrix feats = RandomMatrix(rng, 300, 20) * 3.0 + Matrix::Constant(300, 20, 5.0);
  const Matrix w = RandomMatrix(rng, 20, 4);
  const Matrix fz = zscore_columns(feats.topRows(200)).z;
  const auto lagged = [&](const Matrix& z) { return Matrix(build_design(z, {1, 2}).x * (Matrix(40, 4) << w, 0.5 * w).finished()); };
  const Matrix y = lagged(fz);
  const auto model = fit_encoding_model(feats.topRows(200), y, {1, 2}, alpha_grid(), CvConfig{5, 2, 1});
  const Matrix test_truth = lagged(apply_zscore(feats.bottomRows(100), model.feature_stats));
  const auto acc = prediction_accuracy(model.predict(feats.bottomRows(100)), test_truth);
  for (int v = 0; v < 4; ++v) EXPECT_GT(acc.raw(v), 0.99);
}

}  // namespace
}  // namespace vwam::encoder
