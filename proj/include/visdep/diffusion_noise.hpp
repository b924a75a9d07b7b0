#pragma once

// Forward-diffusion corruption of conditioning vectors.
//
//   x_t = sqrt(abar_t) * x_0 + sqrt(1 - abar_t) * eps,   eps ~ N(0, I)
//
// with the linear DDPM schedule beta_t in [1e-4, 0.02] and abar_t the running
// product of (1 - beta_s). Step 0 is the identity.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "visdep/errors.hpp"
#include "visdep/rng.hpp"

namespace visdep {

inline constexpr int kDefaultNoiseSteps = 1000;
inline constexpr int kDefaultNoiseStep = 900;
inline constexpr double kBetaStart = 1e-4;
inline constexpr double kBetaEnd = 0.02;

struct NoiseSchedule {
  int num_steps = 0;
  std::vector<double> betas;       // betas[s-1] is the increment at step s
  std::vector<double> alpha_bars;  // alpha_bars[s-1] = prod_{r<=s} (1 - beta_r)

  /// abar at `step`; step 0 means no noise.
  double alpha_bar(int step) const {
    if (step < 0 || step > num_steps) {
      throw UsageError("noise step " + std::to_string(step) + " outside [0, " +
                       std::to_string(num_steps) + "]");
    }
    return step == 0 ? 1.0 : alpha_bars[static_cast<std::size_t>(step - 1)];
  }
};

inline NoiseSchedule make_schedule(int num_steps = kDefaultNoiseSteps) {
  if (num_steps < 1) throw UsageError("num_steps must be >= 1");
  NoiseSchedule s;
  s.num_steps = num_steps;
  s.betas.resize(static_cast<std::size_t>(num_steps));
  s.alpha_bars.resize(static_cast<std::size_t>(num_steps));
  double prod = 1.0;
  for (int i = 0; i < num_steps; ++i) {
    const double beta =
        num_steps == 1 ? kBetaStart
                       : kBetaStart + (kBetaEnd - kBetaStart) * i / static_cast<double>(num_steps - 1);
    prod *= 1.0 - beta;
    s.betas[static_cast<std::size_t>(i)] = beta;
    s.alpha_bars[static_cast<std::size_t>(i)] = prod;
  }
  return s;
}

/// Noises `x0` to `step` with a Gaussian stream seeded by `rng_seed`.
inline std::vector<double> corrupt(std::span<const double> x0, int step,
                                   const NoiseSchedule& schedule, std::uint64_t rng_seed) {
  if (x0.empty()) throw UsageError("corrupt: zero-dimensional vector");
  const double abar = schedule.alpha_bar(step);
  std::vector<double> out(x0.begin(), x0.end());
  if (step == 0) return out;
  const double signal = std::sqrt(abar);
  const double noise = std::sqrt(1.0 - abar);
  Rng rng(rng_seed);
  for (double& v : out) v = signal * v + noise * rng.normal();
  return out;
}

}  // namespace visdep
