#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace visdep {

/// Shortest round-trip decimal form; empty for non-finite values.
inline std::string fmt_double(double v) {
  if (!std::isfinite(v)) return {};
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

/// Fixed precision, for plot coordinates.
inline std::string fmt_fixed(double v, int precision = 2) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  return std::string(buf, res.ptr);
}

/// Quotes a CSV field when it contains a separator, quote or line break.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace visdep
