#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "vwam/backbone/backbone.hpp"
#include "vwam/encoder/encoder.hpp"
#include "vwam/featurizer/featurizer.hpp"
#include "vwam/harness/harness.hpp"
#include "vwam/io/formats.hpp"
#include "vwam/io/png.hpp"
#include "vwam/objective/objective.hpp"
#include "vwam/synthesizer/synthesizer.hpp"
#include "vwam/util/text.hpp"

namespace fs = std::filesystem;
using namespace vwam;

namespace {

backbone::BackboneSpec load_backbone(const std::string& arg) {
  if (arg == "tiny_cnn") return backbone::tiny_cnn_spec();
  return backbone::BackboneSpec::load(arg);
}

encoder::Matrix to_eigen(const io::Matrix& m) {
  encoder::Matrix out(Eigen::Index(m.rows), Eigen::Index(m.cols));
  for (std::uint64_t r = 0; r < m.rows; ++r)
    for (std::uint64_t c = 0; c < m.cols; ++c) out(Eigen::Index(r), Eigen::Index(c)) = m.data[r * m.cols + c];
  return out;
}

int backbone_info(const std::string& path, std::size_t fmax) {
  const auto spec = load_backbone(path);
  std::printf("backbone %s, input %zux%zu, %s\n", spec.name.c_str(), spec.input_size, spec.input_size,
              spec.executable() ? "executable" : "profile only (no stages)");
  const auto layout = featurizer::plan_layout(spec, fmax);
  const auto shapes = spec.tap_shapes();
  std::printf("%-20s %-16s %-12s %10s %10s\n", "tap", "shape", "pooled", "features", "offset");
  for (std::size_t i = 0; i < layout.segments.size(); ++i) {
    const auto& s = layout.segments[i];
    std::string pooled = std::to_string(s.channels);
    for (auto p : s.pooled) pooled += "x" + std::to_string(p);
    std::printf("%-20s %-16s %-12s %10zu %10zu\n", s.name.c_str(), ad::shape_str(shapes[i]).c_str(), pooled.c_str(),
                s.length, s.offset);
  }
  std::printf("F_max %zu: %zu features, layout fingerprint %016llx\n", fmax, layout.total,
              static_cast<unsigned long long>(layout.fingerprint()));
  if (spec.executable()) {
    backbone::Backbone net(spec);
    std::printf("weights hash %016llx\n", static_cast<unsigned long long>(net.weights_hash()));
  }
  return 0;
}

int extract(const std::string& backbone_path, const std::string& frames_dir, std::size_t fmax,
            std::size_t frames_per_sample, std::size_t threads, const std::string& out) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(frames_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no .png frames in " + frames_dir);
  backbone::Backbone net(load_backbone(backbone_path));
  featurizer::Featurizer feat(net, fmax);
  std::vector<std::vector<double>> frames(files.size());
  harness::parallel_for(files.size(), threads, [&](std::size_t i) {
    const auto f = feat.compute(io::read_png(files[i]));
    frames[i].assign(f.begin(), f.end());
  });
  std::size_t dropped = 0;
  const auto samples = featurizer::temporal_average(frames, frames_per_sample, &dropped);
  io::Matrix m{samples.size(), feat.layout().total, feat.layout().fingerprint(), {}};
  for (const auto& s : samples) m.data.insert(m.data.end(), s.begin(), s.end());
  io::write_vwam(out, m);
  spdlog::info("{} frames -> {} samples x {} features ({} trailing frames dropped)", files.size(), samples.size(),
               m.cols, dropped);
  return 0;
}

int fit(const std::string& features_path, const std::string& responses_path, const std::vector<std::string>& repeats,
        const std::string& lags_text, const std::string& alphas_text, std::size_t splits, std::size_t resamples,
        std::uint64_t seed, std::size_t permutations, const std::string& out) {
  const auto fm = io::read_vwam(features_path);
  const auto rm = io::read_vwam(responses_path);
  if (fm.rows != rm.rows) throw ShapeError("features and responses have different sample counts");
  const auto lags = vwam::util::parse_sizes(lags_text, "lags");
  const auto alphas = encoder::parse_alpha_grid(alphas_text);
  const auto model =
      encoder::fit_encoding_model(to_eigen(fm), to_eigen(rm), lags, alphas, {splits, resamples, seed}, fm.fingerprint);

  io::WeightsFile w;
  const auto betas = model.fit.betas();
  w.coef_len = std::uint64_t(betas.rows());
  for (const auto& v : model.fit.voxels) {
    w.alpha.push_back(v.alpha);
    w.cv_score.push_back(v.cv_score);
    for (double b : v.beta) w.beta.push_back(float(b));
  }
  io::FeatureSpace space;
  space.fingerprint = fm.fingerprint;
  space.lags.assign(lags.begin(), lags.end());
  space.mean.assign(model.feature_stats.mean.begin(), model.feature_stats.mean.end());
  space.stddev.assign(model.feature_stats.stddev.begin(), model.feature_stats.stddev.end());
  w.space = std::move(space);
  if (!repeats.empty()) {
    std::vector<encoder::Matrix> reps;
    for (const auto& p : repeats) reps.push_back(to_eigen(io::read_vwam(p)));
    const auto nc = encoder::noise_ceiling(reps, {permutations, 0.05, seed});
    for (bool b : nc.mask) w.ceiling_mask.push_back(b ? 1 : 0);
    spdlog::info("noise ceiling: {} of {} voxels pass", std::count(nc.mask.begin(), nc.mask.end(), true),
                 nc.mask.size());
  }
  io::write_vwbw(out, w);
  spdlog::info("fitted {} voxels over {} coefficients", w.alpha.size(), w.coef_len);
  return 0;
}

int make_objective(const std::string& weights_path, const std::string& roi_map, const std::string& target,
                   const std::string& reference, long voxel, const std::string& out) {
  const auto w = io::read_vwbw(weights_path);
  if (!w.space) throw FormatError("weights file lacks feature-space information; refit with this tool");
  const std::size_t voxels = w.alpha.size();
  objective::Matrix betas(Eigen::Index(w.coef_len), Eigen::Index(voxels));
  for (std::size_t v = 0; v < voxels; ++v)
    for (std::size_t k = 0; k < w.coef_len; ++k) betas(Eigen::Index(k), Eigen::Index(v)) = w.beta[v * w.coef_len + k];
  const auto collapsed = objective::collapse_lags(betas, w.space->lags.size());

  objective::ContrastObjective obj;
  if (voxel >= 0) {
    std::vector<std::size_t> refs;
    if (reference == "all") {
      for (std::size_t v = 0; v < voxels; ++v) refs.push_back(v);
    } else {
      refs = vwam::util::parse_sizes(reference, "reference voxels");
    }
    obj = objective::voxel_objective(collapsed, std::size_t(voxel), refs, reference == "all" ? "all voxels" : reference);
  } else {
    if (roi_map.empty() || target.empty()) throw ConfigError("objective needs --roi-map and --target, or --voxel");
    const auto rois = objective::RoiMap::load(roi_map);
    std::vector<std::string> refs;
    if (reference == "all") {
      refs = rois.names();
    } else {
      for (auto& r : vwam::util::split(reference, ',')) refs.push_back(vwam::util::trim(r));
    }
    obj = objective::roi_objective(collapsed, rois, target, refs);
  }
  obj.fingerprint = w.space->fingerprint;
  obj.lags = w.space->lags;
  obj.feature_mean = Eigen::Map<const objective::Vector>(w.space->mean.data(), Eigen::Index(w.space->mean.size()));
  obj.feature_std = Eigen::Map<const objective::Vector>(w.space->stddev.data(), Eigen::Index(w.space->stddev.size()));
  io::write_vwob(out, obj.to_file());
  spdlog::info("objective {} vs {} ({} weights)", obj.target, obj.reference, obj.beta_final.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"voxelmax: voxel-weighted activation maximization"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  std::string backbone_path = "tiny_cnn";
  std::size_t fmax = featurizer::kDefaultFeatureBudget;
  std::size_t threads = 0;

  auto* info = app.add_subcommand("backbone-info", "Describe a backbone profile and its feature layout");
  info->add_option("--backbone", backbone_path, "Profile path or 'tiny_cnn'")->required();
  info->add_option("--fmax", fmax, "Per-layer feature budget");

  std::string frames_dir, out;
  std::size_t frames_per_sample = 1;
  auto* ext = app.add_subcommand("extract", "Features for a directory of PNG frames");
  ext->add_option("--backbone", backbone_path)->required();
  ext->add_option("--frames", frames_dir, "Directory of .png frames, read in name order")->required();
  ext->add_option("--fmax", fmax);
  ext->add_option("--frames-per-sample", frames_per_sample, "Frames averaged into one sample");
  ext->add_option("--threads", threads);
  ext->add_option("--out", out, "Output .vwam")->required();

  std::string features_path, responses_path, lags_text = "1,2,3", alphas_text = "15:1:1e10";
  std::vector<std::string> repeats;
  std::size_t splits = 10, resamples = 10, permutations = 1000;
  std::uint64_t seed = 0;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a ridge encoding model");
  fit_cmd->add_option("--features", features_path, "Features .vwam (samples x F)")->required();
  fit_cmd->add_option("--responses", responses_path, "Responses .vwam (samples x voxels)")->required();
  fit_cmd->add_option("--repeats", repeats, "Repeated test responses for the noise ceiling");
  fit_cmd->add_option("--lags", lags_text);
  fit_cmd->add_option("--alphas", alphas_text, "count:lo:hi, log-spaced");
  fit_cmd->add_option("--cv-splits", splits);
  fit_cmd->add_option("--cv-resamples", resamples);
  fit_cmd->add_option("--permutations", permutations);
  fit_cmd->add_option("--seed", seed);
  fit_cmd->add_option("--out", out, "Output .vwbw")->required();

  std::string weights_path, roi_map, target, reference = "all";
  long voxel = -1;
  auto* obj_cmd = app.add_subcommand("objective", "Contrast objective for an ROI or a voxel");
  obj_cmd->add_option("--weights", weights_path)->required();
  obj_cmd->add_option("--roi-map", roi_map, "CSV voxel,roi");
  obj_cmd->add_option("--target", target, "Target ROI");
  obj_cmd->add_option("--voxel", voxel, "Target voxel instead of an ROI");
  obj_cmd->add_option("--reference", reference, "'all' or a comma list of ROIs / voxels");
  obj_cmd->add_option("--out", out, "Output .vwob")->required();

  std::string objective_path, init = "gray140", color;
  synthesizer::SynthesisConfig scfg;
  bool no_augment = false, use_double = false;
  auto* syn = app.add_subcommand("synthesize", "Optimize an image for an objective");
  syn->add_option("--objective", objective_path)->required();
  syn->add_option("--backbone", backbone_path)->required();
  syn->add_option("--fmax", fmax);
  syn->add_option("--iters", scfg.iterations);
  syn->add_option("--lr", scfg.learning_rate);
  syn->add_option("--seed", scfg.seed);
  syn->add_option("--canvas", scfg.canvas);
  syn->add_option("--init", init, "gray140 or black_noise");
  syn->add_option("--color", color, "Nine comma-separated values of a 3x3 color matrix");
  syn->add_flag("--no-augment", no_augment);
  syn->add_flag("--double", use_double, "64-bit optimization");
  syn->add_option("--out", out, "Output PNG; metadata goes next to it")->required();

  std::string config_path;
  std::optional<std::uint64_t> master_seed;
  auto* sim = app.add_subcommand("simulate", "Closed-loop run on a synthetic brain");
  sim->add_option("--config", config_path, "Experiment config (key=value with sections)");
  sim->add_option("--seed", master_seed, "Override the master seed");
  sim->add_option("--threads", threads);
  sim->add_option("--out", out, "Results directory")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*info) return backbone_info(backbone_path, fmax);
    if (*ext) return extract(backbone_path, frames_dir, fmax, frames_per_sample, threads, out);
    if (*fit_cmd) {
      return fit(features_path, responses_path, repeats, lags_text, alphas_text, splits, resamples, seed, permutations,
                 out);
    }
    if (*obj_cmd) return make_objective(weights_path, roi_map, target, reference, voxel, out);
    if (*syn) {
      scfg.init = synthesizer::parse_init_mode(init);
      if (no_augment) scfg.augment = synthesizer::AugmentConfig::none();
      if (use_double) scfg.precision = synthesizer::Precision::kDouble;
      if (!color.empty()) {
        const auto m = vwam::util::parse_doubles(color, "color");
        if (m.size() != 9) throw ConfigError("--color needs 9 values");
        synthesizer::ColorMatrix cm{};
        std::copy(m.begin(), m.end(), cm.begin());
        scfg.color = cm;
      }
      const auto obj = objective::ContrastObjective::from_file(io::read_vwob(objective_path));
      backbone::Backbone net(load_backbone(backbone_path));
      featurizer::Featurizer feat(net, fmax);
      const auto result = synthesizer::synthesize(obj, feat, scfg);
      synthesizer::write_result(out, result, obj);
      spdlog::info("{}: s {:.4f} -> {:.4f} in {:.1f}s", out, result.trace.s.front(), result.trace.final_s,
                   result.trace.wall_seconds);
      return 0;
    }
    if (*sim) {
      auto cfg = config_path.empty() ? harness::ExperimentConfig{} : harness::ExperimentConfig::load(config_path);
      if (master_seed) cfg.seed = *master_seed;
      if (sim->count("--threads")) cfg.threads = threads;
      const auto result = harness::run_experiment(cfg);
      harness::write_report(result, out);
      std::cout << harness::report(result).text;
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
