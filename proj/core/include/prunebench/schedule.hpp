#pragma once

#include <string>
#include <vector>

namespace prunebench {

enum class ScheduleKind { StepDecade, Cosine };

struct LRStage {
  int start_epoch = 0;
  double lr = 0.0;

  friend bool operator==(const LRStage&, const LRStage&) = default;
};

// Epoch-indexed learning-rate schedule. Step schedules hold one stage per
// decade; cosine schedules hold a single stage at the initial LR and anneal
// to `final_lr` at `total_epochs`.
class LRSchedule {
 public:
  LRSchedule() = default;
  LRSchedule(ScheduleKind kind, std::vector<LRStage> stages, int total_epochs, double final_lr);

  static LRSchedule step(std::vector<LRStage> stages, int total_epochs);
  static LRSchedule cosine(int total_epochs, double init_lr, double min_lr);
  static LRSchedule empty();

  // Parses "0:1e-1,30:1e-2,..." with the given total.
  static LRSchedule parse_step(const std::string& text, int total_epochs);

  ScheduleKind kind() const noexcept { return kind_; }
  const std::vector<LRStage>& stages() const noexcept { return stages_; }
  int total_epochs() const noexcept { return total_epochs_; }
  double init_lr() const { return stages_.empty() ? 0.0 : stages_.front().lr; }
  double final_lr() const noexcept { return final_lr_; }
  bool is_empty() const noexcept { return total_epochs_ == 0; }

  // LR used during 0-based epoch `epoch`.
  double lr_at(int epoch) const;
  std::vector<int> stage_lengths() const;

  // Epoch count of the first LR stage. For cosine schedules this is the
  // first epoch whose LR drops below init_lr / 10.
  int first_stage_length() const;

  // First `epochs` epochs of this schedule (used for the pretraining prefix).
  LRSchedule prefix(int epochs) const;

  // Step schedule with `extra` epochs inserted at the end of the first stage
  // and the later stages shifted.
  LRSchedule extend_first_stage(int extra) const;

  // "0:1e-1,30:1e-2,60:1e-3"; cosine schedules render as "cosine:1e-2->1e-4".
  std::string to_string() const;

  friend bool operator==(const LRSchedule& a, const LRSchedule& b);

 private:
  void validate() const;

  ScheduleKind kind_ = ScheduleKind::StepDecade;
  std::vector<LRStage> stages_;
  int total_epochs_ = 0;
  double final_lr_ = 0.0;
};

// Shortest "<mantissa>e<exp>" rendering, e.g. 0.1 -> "1e-1", 0.05 -> "5e-2".
std::string format_lr(double lr);

// Relative comparison at 1e-9.
bool same_lr(double a, double b);

inline constexpr int kDefaultStageCap = 30;

// Halving rule: every non-final stage gets min(stage_cap, ceil(remaining/2))
// epochs, the final stage takes what is left; one stage per decade from
// init_lr down to final_lr.
LRSchedule synthesize_step_schedule(int total_epochs, double init_lr, double final_lr,
                                    int stage_cap = kDefaultStageCap);

LRSchedule synthesize_cosine_schedule(int total_epochs, double init_lr, double min_lr);

}  // namespace prunebench
