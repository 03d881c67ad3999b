#include "vwam/io/formats.hpp"

#include "vwam/error.hpp"
#include "vwam/io/binary.hpp"

namespace vwam::io {
namespace {

void check_version(std::uint32_t v, const std::filesystem::path& path) {
  if (v != kFormatVersion) {
    throw FormatError(path.string() + ": unsupported version " + std::to_string(v));
  }
}

void write_space(BinaryWriter& w, const FeatureSpace& s) {
  if (s.mean.size() != s.stddev.size()) throw FormatError("feature mean/std length mismatch");
  w.magic("VWFS");
  w.u64(s.fingerprint);
  w.u32(static_cast<std::uint32_t>(s.lags.size()));
  for (auto lag : s.lags) w.u64(lag);
  w.u64(s.mean.size());
  w.f64s(s.mean);
  w.f64s(s.stddev);
}

FeatureSpace read_space(BinaryReader& r) {
  FeatureSpace s;
  s.fingerprint = r.u64();
  const std::uint32_t n_lags = r.u32();
  for (std::uint32_t i = 0; i < n_lags; ++i) s.lags.push_back(r.u64());
  const std::uint64_t n = r.u64();
  s.mean = r.f64s(n);
  s.stddev = r.f64s(n);
  return s;
}

}  // namespace

void write_vwmw(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  BinaryWriter w(path);
  w.magic("VWMW");
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    std::uint64_t n = 1;
    for (auto e : t.shape) n *= e;
    if (n != t.data.size()) throw FormatError("tensor " + t.name + ": data length does not match shape");
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) w.u64(e);
    w.f32s(t.data);
  }
  w.close();
}

std::vector<NamedTensor> read_vwmw(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("VWMW");
  check_version(r.u32(), path);
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError(path.string() + ": tensor " + t.name + " has implausible rank");
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.shape.push_back(r.u64());
      n *= t.shape.back();
    }
    t.data = r.f32s(n);
    out.push_back(std::move(t));
  }
  return out;
}

void write_vwam(const std::filesystem::path& path, const Matrix& m) {
  if (m.rows * m.cols != m.data.size()) throw FormatError("matrix data length does not match rows*cols");
  BinaryWriter w(path);
  w.magic("VWAM");
  w.u32(kFormatVersion);
  w.u64(m.rows);
  w.u64(m.cols);
  w.u64(m.fingerprint);
  w.f32s(m.data);
  w.close();
}

Matrix read_vwam(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("VWAM");
  check_version(r.u32(), path);
  Matrix m;
  m.rows = r.u64();
  m.cols = r.u64();
  m.fingerprint = r.u64();
  m.data = r.f32s(m.rows * m.cols);
  return m;
}

void write_vwbw(const std::filesystem::path& path, const WeightsFile& wf) {
  const std::size_t voxels = wf.alpha.size();
  if (wf.cv_score.size() != voxels || wf.beta.size() != voxels * wf.coef_len) {
    throw FormatError("weights file: inconsistent voxel arrays");
  }
  if (!wf.ceiling_mask.empty() && wf.ceiling_mask.size() != voxels) {
    throw FormatError("weights file: ceiling mask length differs from voxel count");
  }
  BinaryWriter w(path);
  w.magic("VWBW");
  w.u32(kFormatVersion);
  w.u64(voxels);
  w.u64(wf.coef_len);
  for (std::size_t v = 0; v < voxels; ++v) {
    w.f64(wf.alpha[v]);
    w.f64(wf.cv_score[v]);
    w.f32s(std::span<const float>(wf.beta).subspan(v * wf.coef_len, wf.coef_len));
  }
  if (wf.space) write_space(w, *wf.space);
  if (!wf.ceiling_mask.empty()) {
    w.magic("VWNC");
    for (auto m : wf.ceiling_mask) w.u8(m);
  }
  w.close();
}

WeightsFile read_vwbw(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("VWBW");
  check_version(r.u32(), path);
  WeightsFile wf;
  const std::uint64_t voxels = r.u64();
  wf.coef_len = r.u64();
  wf.beta.reserve(voxels * wf.coef_len);
  for (std::uint64_t v = 0; v < voxels; ++v) {
    wf.alpha.push_back(r.f64());
    wf.cv_score.push_back(r.f64());
    const auto b = r.f32s(wf.coef_len);
    wf.beta.insert(wf.beta.end(), b.begin(), b.end());
  }
  if (r.try_magic("VWFS")) wf.space = read_space(r);
  if (r.try_magic("VWNC")) {
    for (std::uint64_t v = 0; v < voxels; ++v) wf.ceiling_mask.push_back(r.u8());
  }
  return wf;
}

void write_vwob(const std::filesystem::path& path, const ObjectiveFile& o) {
  BinaryWriter w(path);
  w.magic("VWOB");
  w.u32(kFormatVersion);
  w.str(o.target);
  w.str(o.reference);
  w.u64(o.data.size());
  w.f32s(o.data);
  if (o.space) write_space(w, *o.space);
  w.close();
}

ObjectiveFile read_vwob(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic("VWOB");
  check_version(r.u32(), path);
  ObjectiveFile o;
  o.target = r.str();
  o.reference = r.str();
  o.data = r.f32s(r.u64());
  if (r.try_magic("VWFS")) o.space = read_space(r);
  return o;
}

}  // namespace vwam::io
