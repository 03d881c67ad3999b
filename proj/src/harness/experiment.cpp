#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <numeric>

#include "vwam/harness/harness.hpp"
#include "vwam/util/rng.hpp"

namespace vwam::harness {

std::vector<bool> SelectivityMatrix::winners() const {
  std::vector<bool> out(rois.size(), false);
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    bool win = true;
    for (Eigen::Index j = 0; j < mean.cols(); ++j) win = win && (j == i || mean(i, i) > mean(i, j));
    out[std::size_t(i)] = win;
  }
  return out;
}

std::size_t SelectivityMatrix::wins() const {
  const auto w = winners();
  return std::size_t(std::count(w.begin(), w.end(), true));
}

namespace {

// Independent seeds for the run's random streams.
enum class Stream : std::uint64_t {
  kStructure = 1,
  kSubject = 2,
  kStimuli = 3,
  kCv = 4,
  kCeiling = 5,
  kSynthesis = 6,
};

std::uint64_t derive(std::uint64_t master, Stream s) {
  return util::splitmix64(master ^ util::splitmix64(static_cast<std::uint64_t>(s)));
}

template <typename F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    spdlog::debug("stage {}", name);
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

backbone::BackboneSpec resolve_backbone(const std::string& name, std::uint64_t seed) {
  if (name == "tiny_cnn") return backbone::tiny_cnn_spec();
  if (name == "linear_probe") return backbone::linear_probe_spec(32, 4, seed);
  return backbone::BackboneSpec::load(name);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  auto mid = v.begin() + std::ptrdiff_t(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

SelectivityMatrix summarize(const std::vector<std::string>& rois, const std::vector<std::vector<Vector>>& responses) {
  // responses[j][k]: ROI responses to image k optimized for ROI j.
  const auto n = Eigen::Index(rois.size());
  SelectivityMatrix m{rois, Matrix::Zero(n, n), Matrix::Zero(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& set = responses[std::size_t(j)];
    const double k = double(set.size());
    for (const auto& r : set) m.mean.col(j) += r / k;
    if (set.size() > 1) {
      for (const auto& r : set) m.spread.col(j) += (r - m.mean.col(j)).cwiseAbs2() / (k - 1);
      m.spread.col(j) = m.spread.col(j).cwiseSqrt();
    }
  }
  return m;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult res;
  res.config = cfg;
  if (cfg.brain.rois == 0 || cfg.train_samples < 10 || cfg.test_samples < 3 || cfg.repeats < 2) {
    throw StageError("config", "need at least one ROI, 10 training samples, 3 test samples and 2 repeats");
  }

  const auto spec = stage("backbone", [&] { return resolve_backbone(cfg.backbone, cfg.seed); });
  const backbone::Backbone net = stage("backbone", [&] { return backbone::Backbone(spec); });
  const featurizer::Featurizer feat(net, cfg.fmax);

  const std::uint64_t stim_seed = derive(cfg.seed, Stream::kStimuli);
  Matrix train, test, calib;
  stage("stimuli", [&] {
    train = stimulus_features(feat, stim_seed, 0, cfg.train_samples, cfg.threads);
    test = stimulus_features(feat, stim_seed, cfg.train_samples, cfg.test_samples, cfg.threads);
    calib = stimulus_features(feat, stim_seed, cfg.train_samples + cfg.test_samples, cfg.calibration_samples,
                              cfg.threads);
    return 0;
  });

  BrainConfig bcfg = cfg.brain;
  bcfg.structure_seed = derive(cfg.seed, Stream::kStructure);
  bcfg.subject_seed = derive(cfg.seed, Stream::kSubject);
  SyntheticBrain brain = stage("brain", [&] { return make_brain(feat.layout(), calib, bcfg); });
  bcfg.subject_seed += cfg.cross_subject_offset;
  SyntheticBrain other = stage("brain", [&] { return make_brain(feat.layout(), calib, bcfg); });
  for (std::size_t a = 0; a < brain.prototypes.size(); ++a) {
    for (std::size_t b = a + 1; b < brain.prototypes.size(); ++b) {
      const auto& p = brain.prototypes[a];
      const auto& q = brain.prototypes[b];
      res.max_prototype_cosine = std::max(res.max_prototype_cosine, std::abs(p.dot(q)) / (p.norm() * q.norm()));
    }
  }

  constexpr std::uint64_t kCalibrationStreams = 1000;
  res.sigma = cfg.brain.sigma;
  if (cfg.calibrate) {
    res.calibration = stage("calibration", [&] {
      return calibrate_sigma(brain, test, cfg.repeats, cfg.target_r_bar, kCalibrationStreams);
    });
    res.sigma = res.calibration.sigma;
  }
  brain.sigma.setConstant(res.sigma);
  other.sigma.setConstant(res.sigma);

  Matrix train_y;
  std::vector<Matrix> test_y;
  stage("responses", [&] {
    train_y = brain.respond(train, 0);
    for (std::size_t r = 0; r < cfg.repeats; ++r) test_y.push_back(brain.respond(test, 1 + r));
    return 0;
  });

  const encoder::CvConfig cv{cfg.cv_splits, cfg.cv_resamples, derive(cfg.seed, Stream::kCv)};
  const auto model = stage("encoder", [&] {
    return encoder::fit_encoding_model(train, train_y, brain.lags, cfg.alphas, cv, feat.layout().fingerprint());
  });

  res.accuracy = stage("accuracy", [&] {
    AccuracyTable t;
    Matrix actual = Matrix::Zero(test_y[0].rows(), test_y[0].cols());
    for (const auto& y : test_y) actual += y / double(test_y.size());
    const auto ceiling = encoder::noise_ceiling(
        test_y, encoder::CeilingConfig{cfg.ceiling_permutations, 0.05, derive(cfg.seed, Stream::kCeiling)});
    t.voxels = encoder::prediction_accuracy(model.predict(test), actual, &ceiling);
    t.r_bar = ceiling.r_bar;
    const auto& raw = t.voxels.raw;
    t.median_raw = median(std::vector<double>(raw.begin(), raw.end()));
    t.median_corrected = median(std::vector<double>(t.voxels.corrected.begin(), t.voxels.corrected.end()));
    for (const auto& name : brain.roi_names()) {
      RoiAccuracy a{name};
      std::vector<double> r, c, rb;
      for (auto v : brain.rois.voxels(name)) {
        r.push_back(raw(Eigen::Index(v)));
        c.push_back(t.voxels.corrected(Eigen::Index(v)));
        rb.push_back(ceiling.r_bar(Eigen::Index(v)));
      }
      a.voxels = r.size();
      a.raw = median(r);
      a.corrected = median(c);
      a.r_bar = median(rb);
      t.rois.push_back(a);
    }
    return t;
  });

  if (cfg.images_per_roi == 0) {
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

  const auto names = brain.roi_names();
  const Matrix collapsed = objective::collapse_lags(model.fit.betas(), model.lags.size());
  const std::vector<std::string> reference = cfg.reference_rois.empty() ? names : cfg.reference_rois;
  std::vector<objective::ContrastObjective> objectives = stage("objective", [&] {
    std::vector<objective::ContrastObjective> out;
    for (const auto& name : names) {
      auto obj = objective::roi_objective(collapsed, brain.rois, name, reference);
      obj.fingerprint = feat.layout().fingerprint();
      obj.feature_mean = model.feature_stats.mean;
      obj.feature_std = model.feature_stats.stddev;
      obj.lags.assign(model.lags.begin(), model.lags.end());
      out.push_back(std::move(obj));
    }
    return out;
  });

  const std::size_t k = cfg.images_per_roi;
  const std::uint64_t synth_seed = derive(cfg.seed, Stream::kSynthesis);
  std::vector<synthesizer::SynthesisResult> runs(names.size() * k);
  stage("synthesis", [&] {
    parallel_for(runs.size(), cfg.threads, [&](std::size_t i) {
      auto sc = cfg.synthesis;
      sc.seed = util::splitmix64(synth_seed + i);
      runs[i] = synthesizer::synthesize(objectives[i / k], feat, sc);
    });
    return 0;
  });

  stage("evaluation", [&] {
    std::vector<std::vector<Vector>> truth(names.size()), cross(names.size()), fitted(names.size());
    res.images.assign(names.size(), {});
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const std::size_t j = i / k;
      const auto& run = runs[i];
      const auto f = feat.compute(run.image);
      const Vector fv = Eigen::Map<const Eigen::VectorXf>(f.data(), Eigen::Index(f.size())).cast<double>();
      truth[j].push_back(brain.roi_response(fv));
      cross[j].push_back(other.roi_response(fv));
      const Vector z = (fv - model.feature_stats.mean).cwiseQuotient(model.feature_stats.stddev);
      const Vector pred = collapsed.transpose() * z;
      Vector roi(Eigen::Index(names.size()));
      for (std::size_t r = 0; r < names.size(); ++r) {
        const auto idx = brain.rois.voxels(names[r]);
        double s = 0;
        for (auto v : idx) s += pred(Eigen::Index(v));
        roi(Eigen::Index(r)) = s / double(idx.size());
      }
      fitted[j].push_back(roi);
      res.images[j].push_back(run.image);

      const auto& s = run.trace.s;
      const std::size_t tail = std::max<std::size_t>(1, s.size() / 10);
      res.traces.push_back({names[j], i % k, run.trace.config.seed, s.front(),
                            std::accumulate(s.end() - std::ptrdiff_t(tail), s.end(), 0.0) / double(tail),
                            run.trace.final_s, run.trace.wall_seconds});
    }
    res.truth = summarize(names, truth);
    res.cross = summarize(names, cross);
    res.fitted = summarize(names, fitted);
    return 0;
  });

  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace vwam::harness
