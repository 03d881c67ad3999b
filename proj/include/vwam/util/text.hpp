#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace vwam::util {

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_ws(std::string_view s);

// Strict parsers: the whole (trimmed) token must be consumed. `what` names
// the value in the ConfigError raised on failure.
std::size_t parse_size(std::string_view s, const std::string& what);
std::uint64_t parse_u64(std::string_view s, const std::string& what);
double parse_double(std::string_view s, const std::string& what);
// Comma- or whitespace-separated list.
std::vector<double> parse_doubles(std::string_view s, const std::string& what);
std::vector<std::size_t> parse_sizes(std::string_view s, const std::string& what);

// 64-bit FNV-1a, for fingerprints.
class Fnv1a {
 public:
  void bytes(const void* data, std::size_t n);
  void u64(std::uint64_t v);
  void str(std::string_view s);
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ull;
};

}  // namespace vwam::util
