#include <cmath>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "sdpm/errors.hpp"
#include "sdpm/schedule.hpp"

using namespace sdpm;

TEST(Schedule, CosineValuesMatchReference) {
  const auto s = cosine_schedule(20, 0.008);
  EXPECT_NEAR(s.alpha_bar(1), 0.99200727868421856, 1e-14);
  EXPECT_NEAR(s.alpha_bar(10), 0.49384359044063775, 1e-14);
  EXPECT_NEAR(s.alpha_bar(20), 6.0596446214511759e-06, 1e-16);
  EXPECT_NEAR(s.beta(1), 0.007992721315781437, 1e-14);
  EXPECT_EQ(s.step_value(1), 1.0);
  EXPECT_EQ(s.step_value(20), 20.0);
}

TEST(Schedule, Invariants) {
  for (std::size_t r : {1u, 2u, 10u, 20u, 30u, 64u}) {
    const auto s = cosine_schedule(r);
    double prev = 1.0;
    for (std::size_t i = 1; i <= r; ++i) {
      EXPECT_GE(s.beta(i), kBetaMin);
      EXPECT_LE(s.beta(i), kBetaMax);
      EXPECT_NEAR(s.alpha(i), 1.0 - s.beta(i), 1e-15);
      EXPECT_LT(s.alpha_bar(i), prev);
      prev = s.alpha_bar(i);
    }
    if (r >= 10) {
      EXPECT_LE(s.alpha_bar(r), 0.05);
    }
  }
  EXPECT_NEAR(cosine_schedule(1).beta(1), 0.999, 1e-15);
}

TEST(Schedule, Errors) {
  EXPECT_THROW(cosine_schedule(0), ValidationError);
  EXPECT_THROW(cosine_schedule(10, 0.0), ValidationError);
  const auto s = cosine_schedule(5);
  EXPECT_THROW(s.beta(6), std::out_of_range);
}

TEST(Schedule, RescaleMapsOntoTrainedRange) {
  const auto trained = cosine_schedule(20);
  const auto r4 = rescale_steps(trained, 4);
  ASSERT_EQ(r4.steps(), 4u);
  EXPECT_DOUBLE_EQ(r4.step_value(1), 1.0);
  EXPECT_DOUBLE_EQ(r4.step_value(4), 20.0);
  EXPECT_DOUBLE_EQ(r4.step_value(2), 1.0 + 19.0 / 3.0);
  const auto r64 = rescale_steps(trained, 64);
  EXPECT_DOUBLE_EQ(r64.step_value(64), 20.0);
  EXPECT_EQ(rescale_steps(trained, 1).step_value(1), 20.0);
  const auto same = rescale_steps(trained, 20);
  for (std::size_t i = 1; i <= 20; ++i) EXPECT_DOUBLE_EQ(same.step_value(i), trained.step_value(i));
}

TEST(Schedule, ForwardNoiseClosedForm) {
  const auto s = cosine_schedule(20);
  const Vec2 tau0{1.0, -1.0}, eps{0.5, 2.0};
  const auto tau = forward_noise(tau0, 10, s, eps);
  const double a = s.alpha_bar(10);
  EXPECT_NEAR(tau[0], std::sqrt(a) * 1.0 + std::sqrt(1 - a) * 0.5, 1e-15);
  EXPECT_NEAR(tau[1], -std::sqrt(a) + std::sqrt(1 - a) * 2.0, 1e-15);
}

TEST(Schedule, ForwardMarginalMoments) {
  const auto s = cosine_schedule(20);
  Rng rng(4);
  const int n = 100000;
  double sum = 0.0, sq = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto ns = forward_sample({2.0, 0.0}, 5, s, rng);
    sum += ns.tau[0];
    sq += ns.tau[0] * ns.tau[0];
  }
  const double mean = sum / n, var = sq / n - mean * mean;
  EXPECT_NEAR(mean, 2.0 * std::sqrt(s.alpha_bar(5)), 0.01);
  EXPECT_NEAR(var, 1.0 - s.alpha_bar(5), 0.01);
}

TEST(Schedule, JsonRoundTripIsExact) {
  const auto s = cosine_schedule(17, 0.02);
  const auto back = DiffusionSchedule::from_json(s.to_json());
  EXPECT_EQ(back.betas(), s.betas());
  EXPECT_EQ(back.alpha_bars(), s.alpha_bars());
  EXPECT_EQ(back.step_values(), s.step_values());
}
