#include "vwam/objective/objective.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "vwam/autodiff/ops.hpp"
#include "vwam/error.hpp"
#include "vwam/util/text.hpp"

namespace vwam::objective {

Vector collapse_lags(const Vector& beta, std::size_t n_lags) {
  if (n_lags == 0 || beta.size() % static_cast<Eigen::Index>(n_lags) != 0) {
    throw ShapeError("collapse_lags: length " + std::to_string(beta.size()) + " is not a multiple of " +
                     std::to_string(n_lags) + " lags");
  }
  const Eigen::Index f = beta.size() / static_cast<Eigen::Index>(n_lags);
  Vector out = Vector::Zero(f);
  for (std::size_t k = 0; k < n_lags; ++k) out += beta.segment(static_cast<Eigen::Index>(k) * f, f);
  return out;
}

Matrix collapse_lags(const Matrix& betas, std::size_t n_lags) {
  if (n_lags == 0 || betas.rows() % static_cast<Eigen::Index>(n_lags) != 0) {
    throw ShapeError("collapse_lags: row count is not a multiple of the lag count");
  }
  const Eigen::Index f = betas.rows() / static_cast<Eigen::Index>(n_lags);
  Matrix out = Matrix::Zero(f, betas.cols());
  for (std::size_t k = 0; k < n_lags; ++k) out += betas.middleRows(static_cast<Eigen::Index>(k) * f, f);
  return out;
}

Vector zscore_vector(const Vector& v) {
  if (v.size() < 2) throw DegenerateObjective("z-score needs at least 2 weights");
  if (!v.allFinite()) throw NumericError("weight vector contains non-finite values");
  const Vector c = v.array() - v.mean();
  const double sd = std::sqrt(c.squaredNorm() / static_cast<double>(v.size()));
  if (!(sd > 1e-300) || sd <= 1e-12 * v.cwiseAbs().maxCoeff()) {
    throw DegenerateObjective("weight vector has zero variance");
  }
  return c / sd;
}

Vector roi_aggregate(std::span<const Vector> weights) {
  if (weights.empty()) throw DegenerateObjective("ROI has no voxels");
  Vector sum = Vector::Zero(weights[0].size());
  for (const auto& w : weights) {
    if (w.size() != sum.size()) throw ShapeError("roi_aggregate: weight vectors differ in length");
    sum += zscore_vector(w);
  }
  return sum / static_cast<double>(weights.size());
}

Vector contrast_vector(const Vector& beta, std::span<const Vector> reference) {
  if (reference.empty()) throw DegenerateObjective("empty reference set");
  const Vector z = zscore_vector(beta);
  Vector zbar = Vector::Zero(z.size());
  for (const auto& r : reference) {
    if (r.size() != z.size()) throw ShapeError("contrast_weights: reference vector length differs");
    zbar += zscore_vector(r);
  }
  zbar /= static_cast<double>(reference.size());
  return z - zbar;
}

ContrastObjective contrast_weights(const Vector& beta, std::span<const Vector> reference, std::string target,
                                   std::string reference_name) {
  const Vector contrast = contrast_vector(beta, reference);
  const double norm = contrast.norm();
  // z has norm sqrt(n); anything this small is rounding noise.
  if (!(norm > 1e-9 * std::sqrt(static_cast<double>(contrast.size())))) {
    throw DegenerateObjective("target is indistinguishable from the reference mean (" + target + ")");
  }
  ContrastObjective obj;
  obj.beta_final = contrast / norm;
  obj.target = std::move(target);
  obj.reference = std::move(reference_name);
  return obj;
}

namespace {

void check_fingerprint(std::uint64_t got, const ContrastObjective& obj) {
  if (got != obj.fingerprint) {
    throw FingerprintMismatch("feature layout fingerprint " + std::to_string(got) + " differs from objective's " +
                              std::to_string(obj.fingerprint));
  }
}

// beta_final . (f - mean) / std  ==  w . f + offset
std::pair<Vector, double> readout(const ContrastObjective& obj) {
  if (obj.feature_std.size() == 0) return {obj.beta_final, 0.0};
  const Vector w = obj.beta_final.cwiseQuotient(obj.feature_std);
  return {w, -w.dot(obj.feature_mean)};
}

}  // namespace

double predicted_contrast(const Vector& features, std::uint64_t fingerprint, const ContrastObjective& obj) {
  check_fingerprint(fingerprint, obj);
  if (features.size() != obj.beta_final.size()) throw ShapeError("predicted_contrast: feature length differs");
  const auto [w, offset] = readout(obj);
  return w.dot(features) + offset;
}

template <typename T>
ad::Var<T> predicted_contrast(const ad::Var<T>& features, std::uint64_t fingerprint, const ContrastObjective& obj) {
  check_fingerprint(fingerprint, obj);
  if (features.shape() != ad::Shape{static_cast<std::size_t>(obj.beta_final.size())}) {
    throw ShapeError("predicted_contrast: features have shape " + ad::shape_str(features.shape()));
  }
  const auto [w, offset] = readout(obj);
  ad::Graph<T>& g = features.graph();
  std::vector<T> wt(w.data(), w.data() + w.size());
  auto s = ad::dot(features, g.constant(ad::Tensor<T>(features.shape(), std::move(wt))));
  if (offset == 0.0) return s;
  return ad::add(s, g.constant(ad::Tensor<T>::scalar(static_cast<T>(offset))));
}

template ad::Var<float> predicted_contrast<float>(const ad::Var<float>&, std::uint64_t, const ContrastObjective&);
template ad::Var<double> predicted_contrast<double>(const ad::Var<double>&, std::uint64_t, const ContrastObjective&);

io::ObjectiveFile ContrastObjective::to_file() const {
  io::ObjectiveFile f;
  f.target = target;
  f.reference = reference;
  f.data.assign(beta_final.data(), beta_final.data() + beta_final.size());
  io::FeatureSpace space;
  space.fingerprint = fingerprint;
  space.lags = lags;
  space.mean.assign(feature_mean.data(), feature_mean.data() + feature_mean.size());
  space.stddev.assign(feature_std.data(), feature_std.data() + feature_std.size());
  f.space = std::move(space);
  return f;
}

ContrastObjective ContrastObjective::from_file(const io::ObjectiveFile& file) {
  ContrastObjective obj;
  obj.target = file.target;
  obj.reference = file.reference;
  obj.beta_final = Eigen::Map<const Eigen::VectorXf>(file.data.data(), static_cast<Eigen::Index>(file.data.size()))
                       .cast<double>();
  const double norm = obj.beta_final.norm();
  if (!(norm > 0)) throw DegenerateObjective("objective file holds a zero vector");
  // Stored in single precision; restore the unit norm.
  obj.beta_final /= norm;
  if (file.space) {
    obj.fingerprint = file.space->fingerprint;
    obj.lags = file.space->lags;
    obj.feature_mean = Eigen::Map<const Vector>(file.space->mean.data(), static_cast<Eigen::Index>(file.space->mean.size()));
    obj.feature_std =
        Eigen::Map<const Vector>(file.space->stddev.data(), static_cast<Eigen::Index>(file.space->stddev.size()));
    if (obj.feature_mean.size() != 0 && obj.feature_mean.size() != obj.beta_final.size()) {
      throw FormatError("objective file: feature statistics length differs from weight length");
    }
  }
  return obj;
}

std::vector<std::string> RoiMap::names() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (!l.empty() && seen.insert(l).second) out.push_back(l);
  }
  return out;
}

std::vector<std::size_t> RoiMap::voxels(const std::string& roi) const {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] == roi) out.push_back(v);
  }
  return out;
}

RoiMap RoiMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ROI map " + path.string());
  RoiMap map;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = util::trim(line);
    if (t.empty() || t[0] == '#' || t == "voxel,roi") continue;
    const auto parts = util::split(t, ',');
    if (parts.size() != 2) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected voxel,roi");
    const std::size_t v = util::parse_size(parts[0], "voxel index");
    if (v >= map.labels.size()) map.labels.resize(v + 1);
    map.labels[v] = parts[1];
  }
  return map;
}

void RoiMap::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write ROI map " + path.string());
  out << "voxel,roi\n";
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (!labels[v].empty()) out << v << ',' << labels[v] << '\n';
  }
}

namespace {

Vector roi_vector(const Matrix& collapsed, const RoiMap& rois, const std::string& roi) {
  const auto vox = rois.voxels(roi);
  if (vox.empty()) throw DegenerateObjective("ROI " + roi + " has no voxels");
  std::vector<Vector> w;
  for (auto v : vox) {
    if (static_cast<Eigen::Index>(v) >= collapsed.cols()) throw ShapeError("ROI map names voxel beyond the model");
    w.push_back(collapsed.col(static_cast<Eigen::Index>(v)));
  }
  return roi_aggregate(w);
}

}  // namespace

ContrastObjective roi_objective(const Matrix& collapsed, const RoiMap& rois, const std::string& target,
                                const std::vector<std::string>& reference_rois) {
  std::vector<Vector> refs;
  std::string ref_name = "rois:";
  for (std::size_t i = 0; i < reference_rois.size(); ++i) {
    refs.push_back(roi_vector(collapsed, rois, reference_rois[i]));
    ref_name += (i ? "," : "") + reference_rois[i];
  }
  return contrast_weights(roi_vector(collapsed, rois, target), refs, "roi:" + target, ref_name);
}

ContrastObjective voxel_objective(const Matrix& collapsed, std::size_t voxel, const std::vector<std::size_t>& reference,
                                  const std::string& reference_name) {
  if (static_cast<Eigen::Index>(voxel) >= collapsed.cols()) throw ShapeError("voxel index beyond the model");
  std::vector<Vector> refs;
  for (auto v : reference) refs.push_back(collapsed.col(static_cast<Eigen::Index>(v)));
  return contrast_weights(collapsed.col(static_cast<Eigen::Index>(voxel)), refs, "voxel:" + std::to_string(voxel),
                          reference_name);
}

}  // namespace vwam::objective
