#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "visdep/diffusion_noise.hpp"

using namespace visdep;

TEST(Schedule, DefaultEndsNearPureNoise) {
  const auto s = make_schedule(1000);
  ASSERT_EQ(s.betas.size(), 1000u);
  // independent product of (1 - beta) for the linear schedule
  double prod = 1.0;
  for (int i = 0; i < 1000; ++i) prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * i / 999.0);
  EXPECT_NEAR(s.alpha_bars[999], prod, 1e-15);
  EXPECT_LT(s.alpha_bars[999], 0.01);
  EXPECT_NEAR(s.alpha_bars[0], 1.0 - 1e-4, 1e-15);
  for (std::size_t i = 1; i < s.alpha_bars.size(); ++i) EXPECT_LT(s.alpha_bars[i], s.alpha_bars[i - 1]);
}

TEST(Schedule, SingleStep) {
  const auto s = make_schedule(1);
  ASSERT_EQ(s.alpha_bars.size(), 1u);
  EXPECT_DOUBLE_EQ(s.alpha_bars[0], 1.0 - s.betas[0]);
}

TEST(Schedule, ZeroStepsRejected) { EXPECT_THROW(make_schedule(0), UsageError); }

TEST(Corrupt, StepZeroIsIdentity) {
  const auto s = make_schedule();
  const std::vector<double> x{0.3, -1.5, 2.0, 1e-300};
  EXPECT_EQ(corrupt(x, 0, s, 99), x);
}

TEST(Corrupt, DeterministicUnderSeed) {
  const auto s = make_schedule();
  const std::vector<double> x{1.0, 0.0, 1.0};
  EXPECT_EQ(corrupt(x, 900, s, 5), corrupt(x, 900, s, 5));
  EXPECT_NE(corrupt(x, 900, s, 5), corrupt(x, 900, s, 6));
}

TEST(Corrupt, RangeErrors) {
  const auto s = make_schedule();
  EXPECT_THROW(corrupt(std::vector<double>{1.0}, -1, s, 0), UsageError);
  EXPECT_THROW(corrupt(std::vector<double>{1.0}, 1001, s, 0), UsageError);
  EXPECT_THROW(corrupt(std::vector<double>{}, 10, s, 0), UsageError);
}

TEST(Corrupt, MonteCarloVarianceLaw) {
  const auto s = make_schedule();
  for (int step : {200, 500, 1000}) {
    const double abar = s.alpha_bar(step);
    const std::vector<double> x0(1000, 0.7);
    double sq = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto xt = corrupt(x0, step, s, seed);
      for (std::size_t i = 0; i < x0.size(); ++i) {
        const double r = xt[i] - std::sqrt(abar) * x0[i];
        sq += r * r;
        ++count;
      }
    }
    EXPECT_NEAR(sq / count / (1.0 - abar), 1.0, 0.02) << "step " << step;
  }
}

TEST(Corrupt, CosineSimilarityFallsWithStep) {
  const auto s = make_schedule();
  std::vector<double> x0(40, 0.0);
  for (int i = 0; i < 5; ++i) x0[static_cast<std::size_t>(i * 7)] = 1.0;
  double prev = 2.0;
  for (int step : {0, 100, 300, 500, 700, 900, 1000}) {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
      const auto xt = corrupt(x0, step, s, seed);
      double dot = 0, a = 0, b = 0;
      for (std::size_t i = 0; i < x0.size(); ++i) {
        dot += x0[i] * xt[i];
        a += x0[i] * x0[i];
        b += xt[i] * xt[i];
      }
      mean += dot / std::sqrt(a * b) / 400.0;
    }
    EXPECT_LE(mean, prev + 1e-12) << "step " << step;
    prev = mean;
  }
}
