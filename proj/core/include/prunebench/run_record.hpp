#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prunebench/schedule.hpp"

namespace prunebench {

// Per-epoch test accuracy (%) of one training phase, measured after the
// epoch's last optimizer step with eval-mode batchnorm.
struct PhaseCurve {
  std::string phase;  // "pretrain", "finetune", "scratch"
  LRSchedule schedule;
  std::vector<double> accuracy;
};

struct RunRecord {
  std::string manifest_hash;
  std::uint64_t seed = 0;
  std::vector<PhaseCurve> phases;
  std::optional<double> post_prune_accuracy;  // right after the sparsifying action
  double final_accuracy = 0.0;
  double trainability = 0.0;
  long total_epochs = 0;
  double total_training_macs = 0.0;
  double wall_seconds = 0.0;
  std::string base_model_hash;

  const PhaseCurve* find_phase(const std::string& name) const {
    for (const auto& p : phases)
      if (p.phase == name) return &p;
    return nullptr;
  }
};

}  // namespace prunebench
