#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "prunebench/error.hpp"
#include "prunebench/planner.hpp"
#include "prunebench/schedule.hpp"

using namespace prunebench;

namespace {

// Stage lengths under the halving rule, computed independently.
std::vector<int> halving_oracle(int total, int stages, int cap) {
  std::vector<int> out;
  int left = total;
  for (int s = 0; s < stages - 1; ++s) {
    const int len = std::min(cap, (left + 1) / 2);
    out.push_back(len);
    left -= len;
  }
  out.push_back(left);
  return out;
}

SetupFacts facts() {
  SetupFacts f;
  f.dataset = "imagenet100";
  f.network = "resnet34";
  f.speedup = 7.68;
  f.base_model_hash = "abc";
  f.finetune_epochs = 90;
  f.finetune_schedule = synthesize_step_schedule(90, 1e-1, 1e-5);
  f.pruning_epochs = 30;
  f.pruning_schedule = LRSchedule::step({{0, 1e-1}}, 30);
  f.total_epochs = 120;
  f.total_training_macs = 1e15;
  return f;
}

}  // namespace

TEST(Schedule, PublishedGoldenVectors) {
  EXPECT_EQ(synthesize_step_schedule(90, 1e-1, 1e-5).to_string(), "0:1e-1,30:1e-2,60:1e-3,75:1e-4,83:1e-5");
  EXPECT_EQ(synthesize_step_schedule(60, 1e-2, 1e-5).to_string(), "0:1e-2,30:1e-3,45:1e-4,53:1e-5");
  EXPECT_EQ(synthesize_step_schedule(120, 1e-1, 1e-5).to_string(), "0:1e-1,30:1e-2,60:1e-3,90:1e-4,105:1e-5");
  EXPECT_EQ(synthesize_step_schedule(30, 1e-4, 1e-5).to_string(), "0:1e-4,15:1e-5");
  EXPECT_EQ(synthesize_step_schedule(60, 1e-3, 1e-5).to_string(), "0:1e-3,30:1e-4,45:1e-5");
}

TEST(Schedule, HalvingRuleMatchesOracle) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> epochs(1, 400), decades(0, 5), cap(1, 40);
  for (int i = 0; i < 2000; ++i) {
    const int d = decades(rng), n = epochs(rng), c = cap(rng);
    const double init = 0.1, fin = 0.1 * std::pow(10.0, -d);
    const auto want = halving_oracle(n, d + 1, c);
    if (*std::min_element(want.begin(), want.end()) < 1) {
      EXPECT_THROW(synthesize_step_schedule(n, init, fin, c), ConfigError);
      continue;
    }
    const LRSchedule s = synthesize_step_schedule(n, init, fin, c);
    EXPECT_EQ(s.stage_lengths(), want) << n << " epochs, " << d << " decades, cap " << c;
    EXPECT_EQ(s.total_epochs(), n);
    EXPECT_DOUBLE_EQ(s.lr_at(n - 1), fin);
  }
}

TEST(Schedule, RejectsNonDecadeRatios) {
  EXPECT_THROW(synthesize_step_schedule(90, 1e-1, 3e-5), ConfigError);
  EXPECT_THROW(synthesize_step_schedule(90, 1e-5, 1e-1), ConfigError);
  EXPECT_THROW(synthesize_step_schedule(2, 1e-1, 1e-5), ConfigError);
}

TEST(Schedule, ParseFormatRoundTripAndLookup) {
  const LRSchedule s = LRSchedule::parse_step("0:1e-1,30:1e-2,60:1e-3", 90);
  EXPECT_EQ(s.to_string(), "0:1e-1,30:1e-2,60:1e-3");
  EXPECT_DOUBLE_EQ(s.lr_at(29), 0.1);
  EXPECT_DOUBLE_EQ(s.lr_at(30), 0.01);
  EXPECT_DOUBLE_EQ(s.lr_at(89), 0.001);
  EXPECT_EQ(s.first_stage_length(), 30);
  EXPECT_THROW(LRSchedule::parse_step("5:1e-1", 90), ConfigError);
  EXPECT_THROW(LRSchedule::parse_step("0:1e-1,30:1e-2", 20), ConfigError);
  EXPECT_EQ(format_lr(0.05), "5e-2");
  EXPECT_EQ(format_lr(static_cast<float>(0.01)), "1e-2");
}

TEST(Schedule, CosineFormulaAndFirstStage) {
  const LRSchedule c = synthesize_cosine_schedule(60, 1e-2, 1e-5);
  for (int e = 0; e < 60; ++e)
    EXPECT_NEAR(c.lr_at(e), 1e-5 + 0.5 * (1e-2 - 1e-5) * (1 + std::cos(M_PI * e / 60.0)), 1e-12);
  int first = 0;
  while (first < 60 && c.lr_at(first) >= 1e-3) ++first;
  EXPECT_EQ(c.first_stage_length(), first);
  EXPECT_EQ(c.to_string(), "cosine:1e-2->1e-5");
  EXPECT_THROW(c.extend_first_stage(10), ConfigError);
}

TEST(Schedule, ExtendFirstStageShiftsLaterStages) {
  const LRSchedule s = synthesize_step_schedule(60, 1e-3, 1e-5);
  const LRSchedule e = s.extend_first_stage(180);
  EXPECT_EQ(e.to_string(), "0:1e-3,210:1e-4,225:1e-5");
  EXPECT_EQ(e.total_epochs(), 240);
  EXPECT_EQ(e.first_stage_length(), s.first_stage_length() + 180);
  EXPECT_EQ(s.extend_first_stage(0), s);
}

TEST(Schedule, PrefixKeepsStagesBeforeCut) {
  const LRSchedule s = synthesize_step_schedule(120, 1e-1, 1e-5);
  EXPECT_EQ(s.prefix(30).to_string(), "0:1e-1");
  EXPECT_EQ(s.prefix(75).to_string(), "0:1e-1,30:1e-2,60:1e-3");
  EXPECT_TRUE(s.prefix(0).is_empty());
}

TEST(Planner, PxFyTakesScratchPrefixAndSynthesizesFinetune) {
  const LRSchedule scratch = synthesize_step_schedule(120, 1e-1, 1e-5);
  const ExperimentPlan p = plan_pxfy(scratch, 30, 90, 1e-1);
  EXPECT_EQ(p.pretrain.to_string(), "0:1e-1");
  EXPECT_EQ(p.finetune.to_string(), "0:1e-1,30:1e-2,60:1e-3,75:1e-4,83:1e-5");
  EXPECT_EQ(p.total_epochs(), 120);
  const ExperimentPlan q = plan_pxfy(scratch, 60, 60, 1e-3);
  EXPECT_EQ(q.finetune.to_string(), "0:1e-3,30:1e-4,45:1e-5");
  EXPECT_THROW(plan_pxfy(scratch, 121, 10, 1e-2), ConfigError);
  EXPECT_EQ(plan_pxfy(scratch, 0, 30, 1e-2, FinetuneKind::Cosine).finetune.kind(), ScheduleKind::Cosine);
}

TEST(Budget, ScratchBMatchesFormula) {
  EXPECT_EQ(scratch_b_epochs({90, 90, 2.31, 1.0}), 298);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> ep(0, 300);
  std::uniform_real_distribution<double> macs(1e6, 1e10), k(1.0, 20.0);
  for (int i = 0; i < 100; ++i) {
    const double f2 = macs(rng);
    const BudgetSpec b{ep(rng), ep(rng), f2 * k(rng), f2};
    const double exact = b.pretrain_epochs * (b.dense_macs / b.pruned_macs) + b.finetune_epochs;
    EXPECT_EQ(scratch_b_epochs(b), static_cast<int>(std::lround(exact)));
  }
}

TEST(Budget, SqueezedPruneEpoch) {
  EXPECT_EQ(squeeze_prune_epoch(30, 1.11), 27);
  EXPECT_EQ(squeeze_prune_epoch(30, 12.06), 2);
  EXPECT_EQ(squeeze_prune_epoch(3, 12.06), 1);
  EXPECT_EQ(squeeze_prune_epoch(0, 2.0), 0);
  EXPECT_THROW(squeeze_prune_epoch(30, 0.5), ConfigError);
}

TEST(Setup, SelfComparisonIsStrictest) {
  const SetupFacts f = facts();
  EXPECT_EQ(classify_setup(f, f).to_string(), "S4.2 [SX-A] [SX-B]");
}

TEST(Setup, EachConditionCapsTheLevel) {
  const SetupFacts a = facts();
  auto level_after = [&](auto mutate) {
    SetupFacts b = a;
    mutate(b);
    return classify_setup(a, b).level;
  };
  EXPECT_EQ(level_after([](SetupFacts& b) { b.dataset = "cifar10"; }), SetupLevel::Incomparable);
  EXPECT_EQ(level_after([](SetupFacts& b) { b.speedup *= 1.03; }), SetupLevel::Incomparable);
  EXPECT_EQ(level_after([](SetupFacts& b) { b.speedup *= 1.01; }), SetupLevel::S4_2);
  EXPECT_EQ(level_after([](SetupFacts& b) { b.base_model_hash = "other"; }), SetupLevel::S1);
  EXPECT_EQ(level_after([](SetupFacts& b) { b.base_model_hash.reset(); }), SetupLevel::S1);
  EXPECT_EQ(level_after([](SetupFacts& b) { b.finetune_epochs = 60; }), SetupLevel::S2);
  EXPECT_EQ(level_after([](SetupFacts& b) { b.finetune_schedule = synthesize_step_schedule(90, 1e-2, 1e-5); }),
            SetupLevel::S3_1);
  EXPECT_EQ(level_after([](SetupFacts& b) { b.pruning_epochs = 60; }), SetupLevel::S3_2);
  EXPECT_EQ(level_after([](SetupFacts& b) { b.pruning_schedule = LRSchedule::step({{0, 1e-2}}, 30); }),
            SetupLevel::S4_1);

  SetupFacts b = a;
  b.total_epochs = 150;
  b.total_training_macs *= 1.05;
  const auto c = classify_setup(a, b);
  EXPECT_FALSE(c.same_total_epochs);
  EXPECT_FALSE(c.same_total_macs);
  EXPECT_EQ(c.to_string(), "S4.2");
}
