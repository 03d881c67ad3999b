#pragma once

// On-disk formats. All numbers are little-endian.
//
//   VWMW  backbone weights: u32 version, u32 count, then per tensor
//         (u32 name length, name, u32 rank, u64 extents[rank], f32 data)
//   VWAM  feature / response matrix: u32 version, u64 rows, u64 cols,
//         u64 layout fingerprint, f32 row-major data
//   VWBW  voxel weights: u32 version, u64 voxels, u64 coef_len, per voxel
//         (f64 alpha, f64 cv_score, f32 beta[coef_len])
//   VWOB  objective: u32 version, target string, reference string,
//         u64 length, f32 data
//
// VWBW and VWOB may be followed by a "VWFS" block describing the feature
// space the coefficients live in (see FeatureSpace), and VWBW by a "VWNC"
// block holding the per-voxel noise-ceiling mask.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace vwam::io {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;
};

void write_vwmw(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_vwmw(const std::filesystem::path& path);

struct Matrix {
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  std::uint64_t fingerprint = 0;
  std::vector<float> data;
};

void write_vwam(const std::filesystem::path& path, const Matrix& m);
Matrix read_vwam(const std::filesystem::path& path);

// Standardization and lag structure of the features a model was fitted on.
struct FeatureSpace {
  std::uint64_t fingerprint = 0;
  std::vector<std::uint64_t> lags;
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct WeightsFile {
  std::uint64_t coef_len = 0;
  std::vector<double> alpha;
  std::vector<double> cv_score;
  std::vector<float> beta;  // voxels x coef_len
  std::optional<FeatureSpace> space;
  std::vector<std::uint8_t> ceiling_mask;  // empty when absent
};

void write_vwbw(const std::filesystem::path& path, const WeightsFile& w);
WeightsFile read_vwbw(const std::filesystem::path& path);

struct ObjectiveFile {
  std::string target;
  std::string reference;
  std::vector<float> data;
  std::optional<FeatureSpace> space;
};

void write_vwob(const std::filesystem::path& path, const ObjectiveFile& o);
ObjectiveFile read_vwob(const std::filesystem::path& path);

}  // namespace vwam::io
