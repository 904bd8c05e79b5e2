#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <vector>

// Strict text parsing: a field parses only if the whole trimmed string is
// consumed, so "1.5x" or "" never silently becomes a number.

namespace snnd {

inline std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t at = s.find(sep, start);
    out.push_back(s.substr(start, at == std::string::npos ? std::string::npos
                                                          : at - start));
    if (at == std::string::npos) break;
    start = at + 1;
  }
  return out;
}

inline bool parse_double_strict(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(s.data(), last, out);
  return res.ec == std::errc() && res.ptr == last;
}

inline bool parse_long_strict(const std::string& s, long& out) {
  if (s.empty()) return false;
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(s.data(), last, out);
  return res.ec == std::errc() && res.ptr == last;
}

inline bool parse_u64_strict(const std::string& s, std::uint64_t& out) {
  if (s.empty()) return false;
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(s.data(), last, out);
  return res.ec == std::errc() && res.ptr == last;
}

inline bool parse_bool_strict(const std::string& s, bool& out) {
  if (s == "true" || s == "1") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0") {
    out = false;
    return true;
  }
  return false;
}

}  // namespace snnd
