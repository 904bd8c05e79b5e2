#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <system_error>

// Number formatting for CSV and config output. std::to_chars emits the
// shortest string that parses back to the exact same value, which keeps
// emitted files byte-stable across runs and round-trippable.

namespace snnd {

inline std::string real_str(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string int_str(long long v) { return std::to_string(v); }

inline std::string u64_str(std::uint64_t v) { return std::to_string(v); }

}  // namespace snnd
