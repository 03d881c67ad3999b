#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vwam/autodiff/graph.hpp"
#include "vwam/io/formats.hpp"

namespace vwam::objective {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Sums the lag blocks of a coefficient vector laid out [lag0 | lag1 | ...].
// A static image contributes the same features at every lag.
Vector collapse_lags(const Vector& beta, std::size_t n_lags);
// Applies collapse_lags to every column of a coefficients x voxels matrix.
Matrix collapse_lags(const Matrix& betas, std::size_t n_lags);

// (v - mean) / population std. Throws DegenerateObjective on zero variance.
Vector zscore_vector(const Vector& v);

// Mean of the z-scored weight vectors of an ROI's voxels.
Vector roi_aggregate(std::span<const Vector> weights);

struct ContrastObjective {
  Vector beta_final;  // unit norm
  std::string target;
  std::string reference;
  std::uint64_t fingerprint = 0;
  // Standardization applied to raw features before the dot product. Empty
  // vectors mean the features are already standardized.
  Vector feature_mean;
  Vector feature_std;
  std::vector<std::uint64_t> lags;

  io::ObjectiveFile to_file() const;
  static ContrastObjective from_file(const io::ObjectiveFile& file);
};

// zscore(beta) minus the mean of the z-scored reference vectors.
Vector contrast_vector(const Vector& beta, std::span<const Vector> reference);

// z = zscore(beta); zbar = mean of zscore(r) over the reference set;
// beta_final = (z - zbar) / |z - zbar|.
ContrastObjective contrast_weights(const Vector& beta, std::span<const Vector> reference, std::string target = {},
                                   std::string reference_name = {});

// s = beta_final . standardize(features). The fingerprint of the features'
// layout must match the objective's.
double predicted_contrast(const Vector& features, std::uint64_t fingerprint, const ContrastObjective& obj);

template <typename T>
ad::Var<T> predicted_contrast(const ad::Var<T>& features, std::uint64_t fingerprint, const ContrastObjective& obj);

// voxel -> ROI label; voxels outside every ROI have an empty label.
struct RoiMap {
  std::vector<std::string> labels;

  std::vector<std::string> names() const;  // in order of first appearance
  std::vector<std::size_t> voxels(const std::string& roi) const;

  static RoiMap load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

// collapsed: features x voxels (lags already summed).
ContrastObjective roi_objective(const Matrix& collapsed, const RoiMap& rois, const std::string& target,
                                const std::vector<std::string>& reference_rois);
ContrastObjective voxel_objective(const Matrix& collapsed, std::size_t voxel, const std::vector<std::size_t>& reference,
                                  const std::string& reference_name);

}  // namespace vwam::objective
