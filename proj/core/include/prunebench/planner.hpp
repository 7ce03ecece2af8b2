#pragma once

#include <array>
#include <optional>
#include <string>

#include "prunebench/schedule.hpp"

namespace prunebench {

// Pretrain -> prune -> finetune plan ("P{p}F{f}").
struct ExperimentPlan {
  int prune_epoch = 0;
  LRSchedule pretrain;  // prefix of the scratch schedule, empty when p = 0
  LRSchedule finetune;

  int total_epochs() const { return pretrain.total_epochs() + finetune.total_epochs(); }
};

enum class FinetuneKind { Step, Cosine };

// Finetune schedule ends at the scratch schedule's final LR. For cosine
// finetuning that final LR is the annealing floor.
ExperimentPlan plan_pxfy(const LRSchedule& scratch, int prune_epoch, int finetune_epochs, double finetune_init_lr,
                         FinetuneKind kind = FinetuneKind::Step);

struct BudgetSpec {
  int pretrain_epochs = 0;   // K1
  int finetune_epochs = 0;   // K2
  double dense_macs = 0.0;   // F1
  double pruned_macs = 0.0;  // F2

  double speedup() const { return dense_macs / pruned_macs; }
};

// Epochs a scratch run of the pruned model needs to spend the same compute
// as pretrain + finetune: round(K1 * F1/F2 + K2).
int scratch_b_epochs(const BudgetSpec& b);

// Pruning epoch squeezed by the speedup: round(p / k), at least 1 for p > 0.
int squeeze_prune_epoch(int prune_epoch, double speedup);

// Comparison-setup strictness ladder.
enum class SetupLevel { Incomparable, S1, S2, S3_1, S3_2, S4_1, S4_2 };

std::string to_string(SetupLevel level);

// What classification needs to know about one experiment. Scratch runs leave
// the pruning/finetuning fields empty.
struct SetupFacts {
  std::string dataset;
  std::string network;
  double speedup = 1.0;
  std::optional<std::string> base_model_hash;
  std::optional<int> finetune_epochs;
  std::optional<LRSchedule> finetune_schedule;
  std::optional<int> pruning_epochs;
  std::optional<LRSchedule> pruning_schedule;
  long total_epochs = 0;
  double total_training_macs = 0.0;
};

struct SetupClass {
  SetupLevel level = SetupLevel::Incomparable;
  bool same_total_epochs = false;  // SX-A
  bool same_total_macs = false;    // SX-B

  std::string to_string() const;  // e.g. "S4.2 [SX-A] [SX-B]"
};

inline constexpr double kSetupTolerance = 0.02;

// Individual conditions, in ladder order: S1 (dataset, network, speedup),
// S2 (+base model), S3.1 (+finetune epochs), S3.2 (+finetune schedule),
// S4.1 (+pruning epochs), S4.2 (+pruning schedule).
std::array<bool, 6> setup_conditions(const SetupFacts& a, const SetupFacts& b);

// Highest level whose conditions, and all conditions below it, hold.
SetupClass classify_setup(const SetupFacts& a, const SetupFacts& b);

}  // namespace prunebench
