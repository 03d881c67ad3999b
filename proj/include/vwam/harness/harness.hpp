#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vwam/encoder/encoder.hpp"
#include "vwam/featurizer/featurizer.hpp"
#include "vwam/io/png.hpp"
#include "vwam/objective/objective.hpp"
#include "vwam/synthesizer/synthesizer.hpp"

namespace vwam::harness {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Runs fn(0..n-1) on up to `threads` workers. Each index must write only its
// own outputs, which keeps results independent of the thread count.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// ---- stimuli ----

enum class StimulusKind { kSmoothNoise, kGrating, kBlobs };

// Deterministic in (seed, index). Pixels in [0, 1], shape [3, size, size].
io::Image make_stimulus(std::size_t size, std::uint64_t seed, std::uint64_t index);
StimulusKind stimulus_kind(std::uint64_t seed, std::uint64_t index);

// Feature rows (samples x F) of `count` stimuli starting at `first`.
Matrix stimulus_features(const featurizer::Featurizer& feat, std::uint64_t seed, std::size_t first, std::size_t count,
                         std::size_t threads);

// ---- synthetic brain ----

inline const std::vector<std::string> kDefaultRoiNames{"V3", "LO", "FFA", "EBA", "RSC"};

struct BrainConfig {
  std::size_t voxels = 100;
  std::size_t rois = 5;
  double sparsity = 0.05;
  double jitter = 0.3;
  double sigma = 1.0;
  std::size_t band = 3;  // feature segments per ROI readout
  std::vector<double> lag_kernel{0.5, 0.3, 0.2};
  std::vector<std::size_t> lags{1, 2, 3};
  std::uint64_t structure_seed = 1;
  std::uint64_t subject_seed = 1;
};

struct SyntheticBrain {
  featurizer::Layout layout;
  encoder::ColumnStats feature_stats;  // standardization of raw features
  Matrix readout;                      // voxels x F, on standardized features
  std::vector<Vector> prototypes;      // one per ROI
  objective::RoiMap rois;
  Vector sigma;                        // per voxel
  std::vector<double> lag_kernel;
  std::vector<std::size_t> lags;
  std::uint64_t subject_seed = 0;

  std::size_t voxels() const { return std::size_t(readout.rows()); }
  std::size_t features() const { return std::size_t(readout.cols()); }
  // voxels x (lags * F): block k is lag_kernel[k] * readout.
  Matrix lagged_readout() const;
  // Noiseless lag-mixed responses (samples x voxels) to a feature sequence.
  Matrix signal(const Matrix& features) const;
  // signal + N(0, sigma) drawn from the subject's stream `stream`.
  Matrix respond(const Matrix& features, std::uint64_t stream) const;
  // Response to a stimulus held on screen: lags collapsed, noiseless.
  Vector static_response(const Vector& features) const;
  // Mean static response of each ROI, in ROI order.
  Vector roi_response(const Vector& features) const;
  std::vector<std::string> roi_names() const { return rois.names(); }
};

// calibration: raw feature rows used for standardization and for scaling
// every voxel's static signal to unit variance.
SyntheticBrain make_brain(const featurizer::Layout& layout, const Matrix& calibration, const BrainConfig& cfg,
                          const std::vector<std::string>& roi_names = kDefaultRoiNames);

struct CalibrationRow {
  double sigma = 0;
  double median_r_bar = 0;
};

struct Calibration {
  std::vector<CalibrationRow> table;
  double sigma = 0;
  double median_r_bar = 0;
};

// Median noise ceiling over voxels for `repeats` presentations of a test
// sequence at noise sigma (noise drawn from streams first_stream + r).
double median_noise_ceiling(const SyntheticBrain& brain, const Matrix& features, double sigma, std::size_t repeats,
                            std::uint64_t first_stream);

// Sweeps a sigma grid, then bisects log(sigma) so the median noise ceiling
// reaches `target`.
Calibration calibrate_sigma(const SyntheticBrain& brain, const Matrix& test_features, std::size_t repeats,
                            double target, std::uint64_t first_stream);

// ---- experiment ----

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0 = hardware concurrency

  BrainConfig brain;
  bool calibrate = true;  // otherwise brain.sigma is used as given
  double target_r_bar = 0.5;
  std::uint64_t cross_subject_offset = 1000;

  std::size_t train_samples = 600;
  std::size_t test_samples = 200;
  std::size_t repeats = 2;
  std::size_t calibration_samples = 200;

  std::string backbone = "tiny_cnn";  // builtin name or profile path
  std::size_t fmax = 256;
  std::vector<double> alphas = encoder::alpha_grid();
  std::size_t cv_splits = 10;
  std::size_t cv_resamples = 2;
  std::size_t ceiling_permutations = 1000;

  std::vector<std::string> reference_rois;  // empty = every ROI

  std::size_t images_per_roi = 3;
  synthesizer::SynthesisConfig synthesis;

  bool write_images = true;

  ExperimentConfig();
  static ExperimentConfig load(const std::filesystem::path& path);
  static ExperimentConfig parse(const std::string& text);
  std::string describe() const;
};

struct SelectivityMatrix {
  std::vector<std::string> rois;
  Matrix mean;    // [i][j]: ROI i, images optimized for ROI j
  Matrix spread;  // across-image standard deviation

  // ROI i responds more to its own images than to any other set.
  std::vector<bool> winners() const;
  std::size_t wins() const;
};

std::string selectivity_csv(const SelectivityMatrix& m);
SelectivityMatrix parse_selectivity_csv(const std::string& text);

struct RoiAccuracy {
  std::string roi;
  std::size_t voxels = 0;
  double raw = 0;        // medians over the ROI's voxels
  double corrected = 0;
  double r_bar = 0;
};

struct AccuracyTable {
  std::vector<RoiAccuracy> rois;
  encoder::Accuracy voxels;
  Vector r_bar;
  double median_raw = 0;
  double median_corrected = 0;
};

struct TraceSummary {
  std::string target;
  std::size_t image = 0;
  std::uint64_t seed = 0;
  double first = 0;
  double tail_mean = 0;  // mean over the last 10% of iterations
  double final_s = 0;
  double seconds = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  Calibration calibration;
  double sigma = 0;
  AccuracyTable accuracy;
  std::vector<TraceSummary> traces;
  std::vector<std::vector<io::Image>> images;  // [roi][k]
  std::optional<SelectivityMatrix> truth;      // ground-truth brain A
  std::optional<SelectivityMatrix> cross;      // ground-truth brain B
  std::optional<SelectivityMatrix> fitted;     // fitted encoding model
  double max_prototype_cosine = 0;
  double seconds = 0;
};

// Wraps any failure with the stage it happened in.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what) : Error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

struct Report {
  std::string text;
  std::map<std::string, std::string> files;  // name -> contents
};

Report report(const ExperimentResult& result);
// Writes every report file, the summary and (when present) the images.
void write_report(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace vwam::harness
