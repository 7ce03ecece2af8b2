#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "prunebench/error.hpp"
#include "prunebench/metrics.hpp"

using namespace prunebench;

TEST(Trainability, MeanOfFirstStageOnly) {
  const std::vector<double> acc{10, 20, 30, 40, 50, 60};
  EXPECT_DOUBLE_EQ(trainability_accuracy(acc, 3), 20.0);
  AccuracyCurve c{acc, LRSchedule::parse_step("0:1e-1,2:1e-2", 6)};
  EXPECT_DOUBLE_EQ(trainability_accuracy(c), 15.0);
  EXPECT_THROW(trainability_accuracy(acc, 0), ConfigError);
  EXPECT_THROW(trainability_accuracy(acc, 7), ConfigError);
}

TEST(Trainability, IgnoresEverythingAfterTheFirstStage) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pct(0, 100);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> acc(20);
    for (double& v : acc) v = pct(rng);
    const int k = 1 + static_cast<int>(rng() % 20);
    double sum = 0;
    for (int j = 0; j < k; ++j) sum += acc[j];
    const double t = trainability_accuracy(acc, k);
    EXPECT_NEAR(t, sum / k, 1e-12);
    for (std::size_t j = k; j < acc.size(); ++j) acc[j] = pct(rng);
    EXPECT_EQ(trainability_accuracy(acc, k), t);
  }
}

TEST(Summary, SampleStandardDeviation) {
  const std::vector<double> v{79.42, 79.57, 79.72};
  const Summary s = summarize(v);
  EXPECT_NEAR(s.mean, 79.57, 1e-12);
  EXPECT_NEAR(s.std, 0.15, 1e-12);
  EXPECT_EQ(s.to_string(), "79.57±0.15 (n=3)");
  const std::vector<double> one{42.0};
  EXPECT_EQ(summarize(one).std, 0.0);
  EXPECT_THROW(summarize(std::vector<double>{}), ConfigError);
}

TEST(Aggregate, SeedOrderDoesNotMatter) {
  std::vector<RunRecord> runs(5);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    runs[i].manifest_hash = "h";
    runs[i].seed = i;
    runs[i].final_accuracy = 90.0 + i * 0.37;
    runs[i].trainability = 70.0 - i * 1.1;
  }
  const RunAggregate a = aggregate(runs);
  std::mt19937_64 rng(9);
  for (int k = 0; k < 10; ++k) {
    std::shuffle(runs.begin(), runs.end(), rng);
    const RunAggregate b = aggregate(runs);
    EXPECT_NEAR(a.final_accuracy.mean, b.final_accuracy.mean, 1e-12);
    EXPECT_NEAR(a.final_accuracy.std, b.final_accuracy.std, 1e-12);
    EXPECT_NEAR(a.trainability.mean, b.trainability.mean, 1e-12);
  }
  runs[2].manifest_hash = "other";
  EXPECT_THROW(aggregate(runs), ConfigError);
}
