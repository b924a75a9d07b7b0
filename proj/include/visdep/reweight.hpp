#pragma once

// Per-token loss weights from a dependence profile.
//
// Raw weights emphasize either image-negative tokens (w = -d for d <= 0) or
// image-positive tokens (w = d for d > 0). They are renormalized per sequence
// with a tempered softmax scaled to the sequence length,
//
//   weight_t = T * exp(tau * w_t) / sum_j exp(tau * w_j),
//
// so the weights sum to T. The EOS weight is then clamped to at least 1.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "visdep/dependence.hpp"
#include "visdep/errors.hpp"

namespace visdep {

enum class WeightMode { Vanilla, EmphasizeNegative, EmphasizePositive };

inline std::string_view to_string(WeightMode m) {
  switch (m) {
    case WeightMode::Vanilla: return "mle";
    case WeightMode::EmphasizeNegative: return "wneg";
    case WeightMode::EmphasizePositive: return "wpos";
  }
  return "mle";
}

inline WeightMode parse_weight_mode(std::string_view s) {
  if (s == "mle") return WeightMode::Vanilla;
  if (s == "wneg") return WeightMode::EmphasizeNegative;
  if (s == "wpos") return WeightMode::EmphasizePositive;
  throw UsageError("unknown loss mode '" + std::string(s) + "' (expected mle, wneg or wpos)");
}

struct ReweightConfig {
  WeightMode mode = WeightMode::Vanilla;
  double tau = 0.5;
  double start_fraction = 0.5;  // training progress at which re-weighting starts
  bool eos_floor = true;

  void validate() const {
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw UsageError("tau must be a finite value >= 0");
    if (!(start_fraction >= 0.0 && start_fraction <= 1.0)) {
      throw UsageError("start_fraction must lie in [0,1]");
    }
  }
};

struct WeightVector {
  std::vector<double> weights;

  std::size_t seq_len() const { return weights.size(); }

  static WeightVector ones(std::size_t n) { return {std::vector<double>(n, 1.0)}; }
};

inline double raw_weight(double d, WeightMode mode) {
  if (!(d >= -1.0 && d <= 1.0)) throw UsageError("raw_weight: d outside [-1,1]");
  switch (mode) {
    case WeightMode::EmphasizeNegative: return d <= 0.0 ? -d : 0.0;
    case WeightMode::EmphasizePositive: return d > 0.0 ? d : 0.0;
    case WeightMode::Vanilla: return 0.0;
  }
  return 0.0;
}

inline WeightVector normalize_weights(std::span<const double> raw, double tau) {
  if (raw.empty()) throw UsageError("normalize_weights: empty input");
  if (!(tau >= 0.0)) throw UsageError("normalize_weights: tau must be >= 0");
  const std::size_t n = raw.size();
  if (tau == 0.0) return WeightVector::ones(n);
  double hi = tau * raw[0];
  for (double r : raw) hi = std::max(hi, tau * r);
  std::vector<double> e(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = std::exp(tau * raw[i] - hi);
    sum += e[i];
  }
  const double scale = static_cast<double>(n) / sum;
  for (double& v : e) v *= scale;
  return {std::move(e)};
}

inline WeightVector apply_eos_floor(WeightVector w, std::optional<std::size_t> eos_index) {
  if (!eos_index) return w;
  if (*eos_index >= w.weights.size()) throw UsageError("apply_eos_floor: eos index out of bounds");
  double& v = w.weights[*eos_index];
  v = std::max(v, 1.0);
  return w;
}

/// Weights for one training sequence at training progress `progress` in [0,1].
/// Before `start_fraction` (or in vanilla mode) the result is exactly all-ones.
inline WeightVector training_weights(const DependenceProfile& profile, const ReweightConfig& cfg,
                                     double progress, std::optional<std::size_t> eos_index) {
  cfg.validate();
  if (!(progress >= 0.0 && progress <= 1.0)) throw UsageError("progress must lie in [0,1]");
  if (profile.d.empty()) throw UsageError("training_weights: empty profile");
  if (cfg.mode == WeightMode::Vanilla || progress < cfg.start_fraction) {
    return WeightVector::ones(profile.size());
  }
  std::vector<double> raw(profile.size());
  std::transform(profile.d.begin(), profile.d.end(), raw.begin(),
                 [&](double d) { return raw_weight(d, cfg.mode); });
  auto w = normalize_weights(raw, cfg.tau);
  if (cfg.eos_floor) w = apply_eos_floor(std::move(w), eos_index);
  return w;
}

}  // namespace visdep
