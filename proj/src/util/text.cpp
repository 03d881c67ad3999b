#include "vwam/util/text.hpp"

#include <cctype>
#include <charconv>

#include "vwam/error.hpp"

namespace vwam::util {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::uint64_t parse_u64(std::string_view s, const std::string& what) {
  const std::string t = trim(s);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(what + ": expected a non-negative integer, got '" + t + "'");
  }
  return v;
}

std::size_t parse_size(std::string_view s, const std::string& what) {
  return static_cast<std::size_t>(parse_u64(s, what));
}

double parse_double(std::string_view s, const std::string& what) {
  const std::string t = trim(s);
  double v = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(what + ": expected a number, got '" + t + "'");
  }
  return v;
}

namespace {

std::vector<std::string> list_tokens(std::string_view s) {
  std::string t(s);
  for (char& c : t) {
    if (c == ',') c = ' ';
  }
  return split_ws(t);
}

}  // namespace

std::vector<double> parse_doubles(std::string_view s, const std::string& what) {
  std::vector<double> out;
  for (const auto& tok : list_tokens(s)) out.push_back(parse_double(tok, what));
  return out;
}

std::vector<std::size_t> parse_sizes(std::string_view s, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& tok : list_tokens(s)) out.push_back(parse_size(tok, what));
  return out;
}

void Fnv1a::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h_ ^= p[i];
    h_ *= 0x100000001b3ull;
  }
}

void Fnv1a::u64(std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  bytes(b, 8);
}

void Fnv1a::str(std::string_view s) {
  u64(s.size());
  bytes(s.data(), s.size());
}

}  // namespace vwam::util
