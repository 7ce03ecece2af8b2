#include "prunebench/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "prunebench/error.hpp"

namespace prunebench {

double trainability_accuracy(std::span<const double> accuracy, int first_stage_epochs) {
  if (first_stage_epochs <= 0) throw ConfigError("trainability accuracy needs a first LR stage of at least one epoch");
  if (accuracy.size() < static_cast<std::size_t>(first_stage_epochs))
    throw ConfigError("accuracy curve has " + std::to_string(accuracy.size()) + " epochs, first stage needs " +
                      std::to_string(first_stage_epochs));
  double sum = 0.0;
  for (int i = 0; i < first_stage_epochs; ++i) sum += accuracy[i];
  return sum / first_stage_epochs;
}

double trainability_accuracy(const AccuracyCurve& curve) {
  return trainability_accuracy(curve.accuracy, curve.schedule.first_stage_length());
}

std::string Summary::to_string(int decimals) const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.*f±%.*f (n=%zu)", decimals, mean, decimals, std, n);
  return buf;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw ConfigError("cannot summarize zero runs");
  Summary s;
  s.n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(s.n - 1));
  }
  return s;
}

RunAggregate aggregate(std::span<const RunRecord> runs) {
  if (runs.empty()) throw ConfigError("aggregate needs at least one run");
  RunAggregate out;
  out.manifest_hash = runs.front().manifest_hash;
  std::vector<double> finals, ts;
  for (const auto& r : runs) {
    if (r.manifest_hash != out.manifest_hash)
      throw ConfigError("aggregate over mixed manifests (" + out.manifest_hash + " vs " + r.manifest_hash + ")");
    finals.push_back(r.final_accuracy);
    ts.push_back(r.trainability);
  }
  out.final_accuracy = summarize(finals);
  out.trainability = summarize(ts);
  return out;
}

}  // namespace prunebench
