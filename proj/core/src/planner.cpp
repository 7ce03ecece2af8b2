#include "prunebench/planner.hpp"

#include <cmath>

#include "prunebench/error.hpp"

namespace prunebench {
namespace {

bool within(double a, double b, double tol) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  return scale == 0.0 || std::fabs(a - b) <= tol * scale;
}

template <typename T>
bool both_equal(const std::optional<T>& a, const std::optional<T>& b) {
  return a.has_value() && b.has_value() && *a == *b;
}

}  // namespace

ExperimentPlan plan_pxfy(const LRSchedule& scratch, int prune_epoch, int finetune_epochs, double finetune_init_lr,
                         FinetuneKind kind) {
  if (prune_epoch < 0 || prune_epoch > scratch.total_epochs())
    throw ConfigError("prune epoch " + std::to_string(prune_epoch) + " outside scratch schedule of " +
                      std::to_string(scratch.total_epochs()) + " epochs");
  if (finetune_epochs < 1) throw ConfigError("finetune epochs must be at least 1");
  ExperimentPlan p;
  p.prune_epoch = prune_epoch;
  p.pretrain = scratch.prefix(prune_epoch);
  p.finetune = kind == FinetuneKind::Step
                   ? synthesize_step_schedule(finetune_epochs, finetune_init_lr, scratch.final_lr())
                   : synthesize_cosine_schedule(finetune_epochs, finetune_init_lr, scratch.final_lr());
  return p;
}

int scratch_b_epochs(const BudgetSpec& b) {
  if (b.pretrain_epochs < 0 || b.finetune_epochs < 0 || !(b.dense_macs > 0.0) || !(b.pruned_macs > 0.0))
    throw ConfigError("invalid budget spec");
  return static_cast<int>(std::floor(b.pretrain_epochs * b.speedup() + b.finetune_epochs + 0.5));
}

int squeeze_prune_epoch(int prune_epoch, double speedup) {
  if (!(speedup >= 1.0)) throw ConfigError("speedup must be >= 1, got " + std::to_string(speedup));
  if (prune_epoch <= 0) return 0;
  return std::max(1, static_cast<int>(std::floor(prune_epoch / speedup + 0.5)));
}

std::string to_string(SetupLevel level) {
  switch (level) {
    case SetupLevel::Incomparable: return "incomparable";
    case SetupLevel::S1: return "S1";
    case SetupLevel::S2: return "S2";
    case SetupLevel::S3_1: return "S3.1";
    case SetupLevel::S3_2: return "S3.2";
    case SetupLevel::S4_1: return "S4.1";
    case SetupLevel::S4_2: return "S4.2";
  }
  return "?";
}

std::string SetupClass::to_string() const {
  std::string s = prunebench::to_string(level);
  if (same_total_epochs) s += " [SX-A]";
  if (same_total_macs) s += " [SX-B]";
  return s;
}

std::array<bool, 6> setup_conditions(const SetupFacts& a, const SetupFacts& b) {
  return {
      a.dataset == b.dataset && a.network == b.network && within(a.speedup, b.speedup, kSetupTolerance),
      both_equal(a.base_model_hash, b.base_model_hash),
      both_equal(a.finetune_epochs, b.finetune_epochs),
      both_equal(a.finetune_schedule, b.finetune_schedule),
      both_equal(a.pruning_epochs, b.pruning_epochs),
      both_equal(a.pruning_schedule, b.pruning_schedule),
  };
}

SetupClass classify_setup(const SetupFacts& a, const SetupFacts& b) {
  SetupClass out;
  if (a.dataset != b.dataset) return out;
  const auto cond = setup_conditions(a, b);
  int level = 0;
  while (level < 6 && cond[level]) ++level;
  out.level = static_cast<SetupLevel>(level);
  if (out.level == SetupLevel::Incomparable) return out;
  out.same_total_epochs = a.total_epochs == b.total_epochs;
  out.same_total_macs = within(a.total_training_macs, b.total_training_macs, kSetupTolerance);
  return out;
}

}  // namespace prunebench
