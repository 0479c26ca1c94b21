#pragma once

#include <charconv>
#include <string>
#include <system_error>

#include "convit/errors.hpp"

namespace convit {

// Locale-independent shortest round-trip decimal form (log lines, manifests).
inline std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& context) {
  double v = 0;
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ParseError(context + ": bad number '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s, const std::string& context) {
  long long v = 0;
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw ParseError(context + ": bad integer '" + s + "'");
  return v;
}

}  // namespace convit
