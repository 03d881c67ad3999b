#pragma once

// Little-endian binary streams shared by the on-disk formats.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vwam::io {

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void magic(std::string_view tag);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f32s(std::span<const float> values);
  void f64s(std::span<const double> values);
  // u32 length followed by the bytes.
  void str(std::string_view s);
  void close();

 private:
  void bytes(const void* data, std::size_t n);

  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  void expect_magic(std::string_view tag);
  // Consumes the tag only if it is next; false at end of file or on mismatch.
  bool try_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::vector<float> f32s(std::size_t n);
  std::vector<double> f64s(std::size_t n);
  std::string str();
  bool at_end();

 private:
  void bytes(void* data, std::size_t n);

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace vwam::io
