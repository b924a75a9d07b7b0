#pragma once

// Per-token visual dependence: the relative drop in a token's probability when
// the clean conditioning is replaced by a noised one,
//
//   d = (p_clean - p_noisy) / max(p_clean, p_noisy)   in [-1, 1],
//
// and the three-way token classification derived from it.

#include <algorithm>
#include <array>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "visdep/errors.hpp"
#include "visdep/trace.hpp"

namespace visdep {

enum class TokenClass { ImagePositive, ImageInvariant, ImageNegative };

inline constexpr double kClassThreshold = 0.25;

inline std::string_view to_string(TokenClass c) {
  switch (c) {
    case TokenClass::ImagePositive: return "positive";
    case TokenClass::ImageInvariant: return "invariant";
    case TokenClass::ImageNegative: return "negative";
  }
  return "invariant";
}

inline constexpr std::size_t class_index(TokenClass c) { return static_cast<std::size_t>(c); }
inline constexpr std::array<TokenClass, 3> kAllClasses = {
    TokenClass::ImagePositive, TokenClass::ImageInvariant, TokenClass::ImageNegative};

/// 0/0 (a token impossible under both conditions) maps to 0.
inline double visual_dependence(double p_clean, double p_noisy) {
  if (!(p_clean >= 0.0 && p_clean <= 1.0) || !(p_noisy >= 0.0 && p_noisy <= 1.0)) {
    throw UsageError("visual_dependence: probability outside [0,1]");
  }
  const double m = std::max(p_clean, p_noisy);
  if (m == 0.0) return 0.0;
  return (p_clean - p_noisy) / m;
}

/// [0.25, 1] positive, [-0.25, 0.25) invariant, [-1, -0.25) negative.
inline TokenClass classify(double d) {
  if (!(d >= -1.0 && d <= 1.0)) throw UsageError("classify: d outside [-1,1]");
  if (d >= kClassThreshold) return TokenClass::ImagePositive;
  if (d < -kClassThreshold) return TokenClass::ImageNegative;
  return TokenClass::ImageInvariant;
}

struct DependenceProfile {
  std::string sample_id;
  std::vector<double> d;
  std::vector<TokenClass> classes;

  std::size_t size() const { return d.size(); }
};

inline DependenceProfile profile_trace(const TokenTrace& trace) {
  DependenceProfile p;
  p.sample_id = trace.sample_id;
  p.d.reserve(trace.size());
  p.classes.reserve(trace.size());
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const double d = visual_dependence(trace.p_clean[t], trace.p_noisy[t]);
    p.d.push_back(d);
    p.classes.push_back(classify(d));
  }
  return p;
}

/// Total dependence of one sample, the ranking key for data filtering.
inline double sample_dependence(std::span<const double> d) {
  if (d.empty()) throw UsageError("sample_dependence: empty profile");
  return std::accumulate(d.begin(), d.end(), 0.0);
}

inline double sample_dependence(const DependenceProfile& p) { return sample_dependence(p.d); }

}  // namespace visdep
