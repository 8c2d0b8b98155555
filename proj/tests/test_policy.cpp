#include <cmath>

#include <gtest/gtest.h>

#include "crm/error.hpp"
#include "crm/policy.hpp"

using namespace crm;

TEST(Policy, AverageAndMaxUseTrailingWindow) {
  std::vector<double> w = {100, 1, 2, 3, 4};
  Rng rng(0);
  EXPECT_DOUBLE_EQ(select_condition(ConditionSpec::average(4), w, rng), 2.5);
  EXPECT_DOUBLE_EQ(select_condition(ConditionSpec::maximum(4), w, rng), 4.0);
  EXPECT_DOUBLE_EQ(select_condition(ConditionSpec::average(32), w, rng), 22.0);
  EXPECT_DOUBLE_EQ(select_condition(ConditionSpec::maximum(32), w, rng), 100.0);
  EXPECT_DOUBLE_EQ(select_condition(ConditionSpec::explicit_value(7.5), w, rng), 7.5);
}

TEST(Policy, EmptyHistoryIsAnError) {
  Rng rng(0);
  EXPECT_THROW(select_condition(ConditionSpec::average(), {}, rng), DataError);
}

TEST(Policy, MultiplexedPicksOneOfTheStrategies) {
  std::vector<double> w = {10, 20, 60};
  Rng rng(4);
  const auto spec = ConditionSpec::multiplexed(0.5, 32);
  for (int i = 0; i < 200; ++i) {
    const double c = select_condition(spec, w, rng);
    ASSERT_TRUE(c == 30.0 || c == 60.0) << c;
  }
}

TEST(Policy, MultiplexedExtremesAreDeterministic) {
  std::vector<double> w = {10, 20, 60};
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(select_condition(ConditionSpec::multiplexed(0.0), w, rng), 30.0);
    EXPECT_EQ(select_condition(ConditionSpec::multiplexed(1.0), w, rng), 60.0);
  }
}

TEST(Policy, MultiplexedFrequencyWithinBinomialBounds) {
  std::vector<double> w = {1, 9};
  for (double p : {0.1, 0.3, 0.7}) {
    Rng rng(77);
    const auto spec = ConditionSpec::multiplexed(p);
    const int n = 100000;
    int hits = 0;
    for (int i = 0; i < n; ++i) hits += select_condition(spec, w, rng) == 9.0;
    const double sigma = std::sqrt(n * p * (1 - p));
    EXPECT_LE(std::abs(hits - n * p), 3 * sigma) << "p=" << p;
  }
}

TEST(Policy, ParseAndLabel) {
  EXPECT_EQ(parse_condition("avg").mode, ConditionSpec::Mode::avg);
  EXPECT_EQ(parse_condition("max", 8).window_n, 8u);
  const auto mux = parse_condition("mux:0.25");
  EXPECT_EQ(mux.mode, ConditionSpec::Mode::multiplexed);
  EXPECT_DOUBLE_EQ(mux.p, 0.25);
  EXPECT_EQ(parse_condition("value:120").label(), "value:120");
  EXPECT_EQ(mux.label(), "mux:0.25");
  EXPECT_THROW(parse_condition("mux:1.5"), ConfigError);
  EXPECT_THROW(parse_condition("value:-3"), ConfigError);
  EXPECT_THROW(parse_condition("median"), ConfigError);
  EXPECT_THROW(parse_condition("avg", 0), ConfigError);
}
