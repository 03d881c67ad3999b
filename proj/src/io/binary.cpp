#include "vwam/io/binary.hpp"

#include <bit>
#include <cstring>

#include "vwam/error.hpp"

namespace vwam::io {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out = static_cast<U>((out << 8) | ((v >> (8 * i)) & 0xff));
    }
    return out;
  }
  return v;
}

// Upper bound on any single array length read from disk; guards against
// allocating absurd buffers from a corrupt header.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

}  // namespace

BinaryWriter::BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
  if (!out_) throw FormatError("cannot open " + path.string() + " for writing");
}

void BinaryWriter::bytes(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) throw FormatError("write failed: " + path_.string());
}

void BinaryWriter::magic(std::string_view tag) { bytes(tag.data(), tag.size()); }
void BinaryWriter::u8(std::uint8_t v) { bytes(&v, 1); }

void BinaryWriter::u32(std::uint32_t v) {
  v = to_little(v);
  bytes(&v, 4);
}

void BinaryWriter::u64(std::uint64_t v) {
  v = to_little(v);
  bytes(&v, 8);
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::f32s(std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    bytes(values.data(), values.size_bytes());
  } else {
    for (float v : values) u32(std::bit_cast<std::uint32_t>(v));
  }
}

void BinaryWriter::f64s(std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    bytes(values.data(), values.size_bytes());
  } else {
    for (double v : values) f64(v);
  }
}

void BinaryWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void BinaryWriter::close() {
  out_.flush();
  if (!out_) throw FormatError("write failed: " + path_.string());
  out_.close();
}

BinaryReader::BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw FormatError("cannot open " + path.string());
}

void BinaryReader::bytes(void* data, std::size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("truncated file: " + path_.string());
}

void BinaryReader::expect_magic(std::string_view tag) {
  std::string got(tag.size(), '\0');
  bytes(got.data(), got.size());
  if (got != tag) throw FormatError(path_.string() + ": expected magic " + std::string(tag));
}

bool BinaryReader::try_magic(std::string_view tag) {
  const auto pos = in_.tellg();
  std::string got(tag.size(), '\0');
  in_.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (static_cast<std::size_t>(in_.gcount()) == tag.size() && got == tag) return true;
  in_.clear();
  in_.seekg(pos);
  return false;
}

std::uint8_t BinaryReader::u8() {
  std::uint8_t v = 0;
  bytes(&v, 1);
  return v;
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v = 0;
  bytes(&v, 4);
  return to_little(v);
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v = 0;
  bytes(&v, 8);
  return to_little(v);
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::vector<float> BinaryReader::f32s(std::size_t n) {
  if (n > kMaxElements) throw FormatError(path_.string() + ": implausible array length");
  std::vector<float> out(n);
  if constexpr (std::endian::native == std::endian::little) {
    bytes(out.data(), n * sizeof(float));
  } else {
    for (float& v : out) v = std::bit_cast<float>(u32());
  }
  return out;
}

std::vector<double> BinaryReader::f64s(std::size_t n) {
  if (n > kMaxElements) throw FormatError(path_.string() + ": implausible array length");
  std::vector<double> out(n);
  if constexpr (std::endian::native == std::endian::little) {
    bytes(out.data(), n * sizeof(double));
  } else {
    for (double& v : out) v = f64();
  }
  return out;
}

std::string BinaryReader::str() {
  const std::uint32_t n = u32();
  if (n > (1u << 24)) throw FormatError(path_.string() + ": implausible string length");
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

bool BinaryReader::at_end() { return in_.peek() == std::ifstream::traits_type::eof(); }

}  // namespace vwam::io
