#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "vwam/error.hpp"
#include "vwam/harness/harness.hpp"

namespace vwam::harness {
namespace {

class BrainTest : public ::testing::Test {
 protected:
  BrainTest() : net_(backbone::tiny_cnn_spec()), feat_(net_, 256) {
    calib_ = stimulus_features(feat_, 77, 0, 60, 1);
  }
  BrainConfig config() const {
    BrainConfig c;
    c.voxels = 25;
    c.structure_seed = 3;
    c.subject_seed = 4;
    return c;
  }
  backbone::Backbone net_;
  featurizer::Featurizer feat_;
  Matrix calib_;
};

TEST(ParallelFor, IndependentOfThreadCount) {
  std::vector<double> a(50), b(50);
  parallel_for(50, 1, [&](std::size_t i) { a[i] = std::sqrt(double(i)); });
  parallel_for(50, 4, [&](std::size_t i) { b[i] = std::sqrt(double(i)); });
  EXPECT_EQ(a, b);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw ConfigError("boom"); }), ConfigError);
  std::atomic<int> calls{0};
  parallel_for(0, 4, [&](std::size_t) { ++calls; });
  EXPECT_EQ(calls, 0);
}

TEST(Stimuli, DeterministicInRangeAndVaried) {
  std::set<StimulusKind> kinds;
  for (std::uint64_t i = 0; i < 30; ++i) {
    const auto a = make_stimulus(32, 5, i);
    EXPECT_EQ(a.to_vector(), make_stimulus(32, 5, i).to_vector());
    ASSERT_EQ(a.shape(), (ad::Shape{3, 32, 32}));
    for (float v : a.data()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
    kinds.insert(stimulus_kind(5, i));
  }
  EXPECT_EQ(kinds.size(), 3u);
  EXPECT_NE(make_stimulus(32, 5, 0).to_vector(), make_stimulus(32, 6, 0).to_vector());
}

TEST_F(BrainTest, NoiselessSingleVoxelIsLinearReadout) {
  auto c = config();
  c.voxels = 1;
  c.rois = 1;
  c.sigma = 0;
  c.lags = {0};
  c.lag_kernel = {1.0};
  const auto brain = make_brain(feat_.layout(), calib_, c);
  const Matrix f = stimulus_features(feat_, 78, 0, 12, 1);
  const Matrix z = encoder::apply_zscore(f, brain.feature_stats);
  const Matrix want = z * brain.readout.transpose();
  EXPECT_EQ(brain.respond(f, 0), want);
  for (Eigen::Index t = 0; t < f.rows(); ++t) {
    EXPECT_NEAR(brain.static_response(f.row(t).transpose())(0), want(t, 0), 1e-12);
  }
}

TEST_F(BrainTest, LagMixing) {
  auto c = config();
  c.sigma = 0;
  const auto brain = make_brain(feat_.layout(), calib_, c);
  const Matrix f = stimulus_features(feat_, 79, 0, 10, 1);
  const Matrix y = brain.signal(f);
  // Through the lagged design used by the encoder.
  const auto d = encoder::build_design(encoder::apply_zscore(f, brain.feature_stats), brain.lags);
  EXPECT_LT((y - d.x * brain.lagged_readout().transpose()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(y.row(0).norm(), 0.0);  // lags start at 1
}

TEST_F(BrainTest, StructureAndInvariants) {
  const auto brain = make_brain(feat_.layout(), calib_, config());
  ASSERT_EQ(brain.prototypes.size(), 5u);
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = a + 1; b < 5; ++b) {
      const auto& p = brain.prototypes[a];
      const auto& q = brain.prototypes[b];
      EXPECT_LT(std::abs(p.dot(q)) / (p.norm() * q.norm()), 0.1);
    }
  }
  EXPECT_TRUE(brain.readout.allFinite());
  EXPECT_EQ(brain.roi_names(), (std::vector<std::string>{"V3", "LO", "FFA", "EBA", "RSC"}));
  for (const auto& name : brain.roi_names()) EXPECT_EQ(brain.rois.voxels(name).size(), 5u);
  // ROI k reads segments k..k+2 only.
  const auto& segs = feat_.layout().segments;
  for (std::size_t r = 0; r < 5; ++r) {
    const std::size_t lo = segs[r].offset, hi = segs[r + 2].offset + segs[r + 2].length;
    for (Eigen::Index f = 0; f < brain.prototypes[r].size(); ++f) {
      if (brain.prototypes[r](f) != 0) {
        ASSERT_TRUE(std::size_t(f) >= lo && std::size_t(f) < hi);
      }
    }
  }
  // Unit static signal variance on the calibration set.
  const Matrix s = encoder::apply_zscore(calib_, brain.feature_stats) * brain.readout.transpose();
  for (Eigen::Index v = 0; v < s.cols(); ++v) {
    const double sd = std::sqrt((s.col(v).array() - s.col(v).mean()).square().mean());
    EXPECT_NEAR(sd, 1.0, 1e-9);
  }
}

TEST_F(BrainTest, SubjectsShareStructure) {
  auto c = config();
  const auto a = make_brain(feat_.layout(), calib_, c);
  const auto a2 = make_brain(feat_.layout(), calib_, c);
  EXPECT_EQ(a.readout, a2.readout);
  c.subject_seed = 99;
  const auto b = make_brain(feat_.layout(), calib_, c);
  for (std::size_t r = 0; r < 5; ++r) EXPECT_EQ(a.prototypes[r], b.prototypes[r]);
  EXPECT_NE(a.readout, b.readout);
  EXPECT_NE(a.respond(calib_, 0), b.respond(calib_, 0));
}

TEST_F(BrainTest, Errors) {
  auto c = config();
  c.voxels = 3;
  EXPECT_THROW(make_brain(feat_.layout(), calib_, c), ConfigError);
  c = config();
  c.sparsity = 0;
  EXPECT_THROW(make_brain(feat_.layout(), calib_, c), ConfigError);
  c = config();
  c.lag_kernel = {1.0};
  EXPECT_THROW(make_brain(feat_.layout(), calib_, c), ConfigError);
  EXPECT_THROW(make_brain(feat_.layout(), calib_.leftCols(10), config()), ShapeError);
}

TEST_F(BrainTest, NoiselessRepeatsHaveUnitCeiling) {
  auto c = config();
  c.sigma = 0;
  const auto brain = make_brain(feat_.layout(), calib_, c);
  const Matrix f = stimulus_features(feat_, 80, 0, 40, 1);
  const auto ceiling = encoder::noise_ceiling({brain.respond(f, 1), brain.respond(f, 2)}, {100, 0.05, 1});
  for (Eigen::Index v = 0; v < ceiling.r_bar.size(); ++v) EXPECT_NEAR(ceiling.r_bar(v), 1.0, 1e-12);
}

TEST_F(BrainTest, CalibrationHitsTarget) {
  const auto brain = make_brain(feat_.layout(), calib_, config());
  const Matrix test = stimulus_features(feat_, 81, 0, 200, 1);
  const auto cal = calibrate_sigma(brain, test, 2, 0.5, 1000);
  EXPECT_NEAR(cal.median_r_bar, 0.5, 0.02);
  ASSERT_FALSE(cal.table.empty());
  for (std::size_t i = 1; i < cal.table.size(); ++i) {
    EXPECT_LT(cal.table[i].median_r_bar, cal.table[i - 1].median_r_bar);
  }
}

TEST(Selectivity, DominantDiagonalWins) {
  SelectivityMatrix m{{"a", "b", "c"}, Matrix::Identity(3, 3) * 2 + Matrix::Constant(3, 3, 0.5), Matrix::Zero(3, 3)};
  EXPECT_EQ(m.winners(), (std::vector<bool>{true, true, true}));
  m.mean(1, 2) = 5;
  EXPECT_EQ(m.wins(), 2u);
  m.mean(0, 1) = m.mean(0, 0);  // ties do not win
  EXPECT_EQ(m.wins(), 1u);
}

TEST(Selectivity, CsvRoundTrip) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0, 100);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = Eigen::Index(1 + trial % 6);
    SelectivityMatrix m;
    for (Eigen::Index i = 0; i < n; ++i) m.rois.push_back("roi" + std::to_string(i));
    m.mean = Matrix::NullaryExpr(n, n, [&] { return nd(rng) * std::pow(10.0, trial % 7 - 3); });
    m.spread = Matrix::NullaryExpr(n, n, [&] { return std::abs(nd(rng)); });
    const auto back = parse_selectivity_csv(selectivity_csv(m));
    EXPECT_EQ(back.rois, m.rois);
    EXPECT_EQ(back.mean, m.mean);
    EXPECT_EQ(back.spread, m.spread);
  }
  EXPECT_THROW(parse_selectivity_csv("nope\n"), FormatError);
  EXPECT_THROW(parse_selectivity_csv("roi,target,mean,spread\na,a,1,0\na,b,1,0\n"), FormatError);
  EXPECT_THROW(parse_selectivity_csv("roi,target,mean,spread\na,a,x,0\n"), FormatError);
}

TEST(Config, ParseAndDescribeRoundTrip) {
  const std::string text =
      "seed = 9\n"
      "[brain]\nvoxels = 40\nsigma = auto\nlag_kernel = 0.6, 0.4\nlags = 1, 2\n"
      "[stimuli]\ntrain = 300\n"
      "[encoder]\nalphas = 5:1e-1:1e3\ncv_resamples = 1\n"
      "[objective]\nreference = LO, FFA\n"
      "[synthesis]\niterations = 64\ncanvas = 96\naugment = off\ninit = black_noise\n"
      "[report]\nwrite_images = false\n";
  const auto c = ExperimentConfig::parse(text);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.brain.voxels, 40u);
  EXPECT_TRUE(c.calibrate);
  EXPECT_EQ(c.brain.lags, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(c.train_samples, 300u);
  EXPECT_EQ(c.alphas.size(), 5u);
  EXPECT_EQ(c.reference_rois, (std::vector<std::string>{"LO", "FFA"}));
  EXPECT_EQ(c.synthesis.iterations, 64u);
  EXPECT_FALSE(c.synthesis.augment.any());
  EXPECT_EQ(c.synthesis.init, synthesizer::InitMode::kBlackNoise);
  EXPECT_FALSE(c.write_images);
  EXPECT_EQ(ExperimentConfig::parse(c.describe()).describe(), c.describe());

  const ExperimentConfig d;
  EXPECT_EQ(d.synthesis.iterations, 256u);
  EXPECT_EQ(d.synthesis.canvas, 128u);
  EXPECT_EQ(ExperimentConfig::parse(d.describe()).describe(), d.describe());
  EXPECT_EQ(ExperimentConfig::parse("[brain]\nsigma = 0.25\n").brain.sigma, 0.25);
}

TEST(Config, Errors) {
  EXPECT_THROW(ExperimentConfig::parse("[brain]\nvoxelz = 3\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("[nope]\nx = 1\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("[brain]\nvoxels = many\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::parse("[synthesis]\niterations = 0\n"), ConfigError);
  EXPECT_THROW(ExperimentConfig::load("/nonexistent/run.cfg"), ConfigError);
}

ExperimentConfig tiny_run() {
  ExperimentConfig c;
  c.seed = 5;
  c.threads = 1;
  c.brain.voxels = 20;
  c.train_samples = 150;
  c.test_samples = 40;
  c.calibration_samples = 40;
  c.cv_splits = 5;
  c.cv_resamples = 1;
  c.ceiling_permutations = 50;
  c.alphas = encoder::alpha_grid(5, 1, 1e4);
  c.images_per_roi = 1;
  c.synthesis.iterations = 8;
  c.synthesis.canvas = 64;
  return c;
}

TEST(Experiment, DeterministicEndToEnd) {
  const auto a = run_experiment(tiny_run());
  const auto b = run_experiment(tiny_run());
  ASSERT_TRUE(a.truth && b.truth);
  EXPECT_EQ(a.truth->mean, b.truth->mean);
  EXPECT_EQ(a.cross->mean, b.cross->mean);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_EQ(a.traces.size(), 5u);
  EXPECT_LT(a.max_prototype_cosine, 0.1);
  EXPECT_TRUE(a.truth->mean.allFinite());
  EXPECT_TRUE(a.truth->spread.isZero());  // one image per ROI

  const auto rep = report(a);
  EXPECT_NE(rep.text.find("verdicts"), std::string::npos);
  EXPECT_EQ(parse_selectivity_csv(rep.files.at("selectivity_truth.csv")).mean, a.truth->mean);
  const auto dir = std::filesystem::temp_directory_path() / "vwam_harness_test";
  write_report(a, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "summary.txt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "roi_FFA_0.png"));
  std::filesystem::remove_all(dir);
}

TEST(Experiment, ThreadCountDoesNotChangeResults) {
  auto c = tiny_run();
  c.train_samples = 60;
  c.synthesis.iterations = 3;
  const auto one = run_experiment(c);
  c.threads = 3;
  const auto many = run_experiment(c);
  EXPECT_EQ(one.truth->mean, many.truth->mean);
}

TEST(Experiment, AccuracyOnlyReport) {
  auto c = tiny_run();
  c.images_per_roi = 0;
  c.calibrate = false;
  c.brain.sigma = 0.1;
  const auto r = run_experiment(c);
  EXPECT_TRUE(r.traces.empty());
  EXPECT_FALSE(r.truth.has_value());
  const auto rep = report(r);
  EXPECT_EQ(rep.files.count("accuracy.csv"), 1u);
  EXPECT_EQ(rep.files.count("selectivity_truth.csv"), 0u);
  EXPECT_EQ(rep.text.find("verdicts"), std::string::npos);
  EXPECT_EQ(r.accuracy.rois.size(), 5u);
  EXPECT_GT(r.accuracy.median_raw, 0.5);
}

TEST(Experiment, StageErrorsNameTheStage) {
  auto c = tiny_run();
  c.backbone = "/nonexistent/profile.spec";
  try {
    run_experiment(c);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "backbone");
  }
  c = tiny_run();
  c.brain.voxels = 2;
  try {
    run_experiment(c);
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "brain");
  }
}

}  // namespace
}  // namespace vwam::harness
