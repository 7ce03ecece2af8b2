#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prunebench/run_record.hpp"
#include "prunebench/schedule.hpp"

namespace prunebench {

struct AccuracyCurve {
  std::vector<double> accuracy;  // percent, one entry per epoch
  LRSchedule schedule;
};

// Mean test accuracy over the first `first_stage_epochs` epochs.
double trainability_accuracy(std::span<const double> accuracy, int first_stage_epochs);

// Uses the attached schedule's first LR stage as the averaging window.
double trainability_accuracy(const AccuracyCurve& curve);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 when n = 1
  std::size_t n = 0;

  // "79.57±0.15 (n=3)"
  std::string to_string(int decimals = 2) const;
};

Summary summarize(std::span<const double> values);

struct RunAggregate {
  std::string manifest_hash;
  Summary final_accuracy;
  Summary trainability;
};

// Runs must share one manifest (they differ only by seed).
RunAggregate aggregate(std::span<const RunRecord> runs);

}  // namespace prunebench
