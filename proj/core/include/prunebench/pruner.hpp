#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "prunebench/checkpoint.hpp"
#include "prunebench/graph.hpp"

namespace prunebench {

// Filter ranking. Random exists only as an ablation baseline for
// cross-validation experiments.
enum class RankCriterion { L1, Random };

struct PruneConfig {
  double ratio = 0.0;               // uniform ratio for every prunable conv, in [0, 1)
  std::vector<double> stage_ratios;  // when non-empty, ratio per LayerSpec::stage
  RankCriterion criterion = RankCriterion::L1;
  std::uint64_t seed = 0;  // Random criterion only
};

// max(1, floor((1 - ratio) * channels + 0.5))
std::size_t kept_count(std::size_t channels, double ratio);

// Ratio applied to a layer under `cfg`; 0 for anything not prunable.
double layer_ratio(const LayerSpec& layer, const PruneConfig& cfg);

struct FilterRanking {
  std::vector<double> norms;       // sum |w[i, :, :, :]|
  std::vector<std::size_t> order;  // descending norm, lower index first on ties
};

FilterRanking l1_rank(const Tensor& conv_weight);

// Kept channel indices, ascending. `out` covers prunable convs and every
// batchnorm that follows one; `in` covers the conv input channels and the
// linear input features that consume a pruned output.
struct KeepPlan {
  std::map<std::string, std::vector<std::size_t>> out;
  std::map<std::string, std::vector<std::size_t>> in;

  friend bool operator==(const KeepPlan&, const KeepPlan&) = default;
};

// Ranks filters of every prunable conv (weights required) and propagates the
// keep sets to dependent layers.
KeepPlan plan(const ModelGraph& model, const PruneConfig& cfg);

// Same propagation with the first kept_count indices of every prunable conv;
// needs no weights, used for architecture-only pruning (FLOPs, scratch).
KeepPlan plan_structure(const ModelGraph& model, const PruneConfig& cfg);

// Builds the physically smaller model: reduced channel counts and, when the
// source is materialized, weights/biases/batchnorm state gathered through the
// keep indices. The source is not modified.
ModelGraph rebuild_small_dense(const ModelGraph& model, const KeepPlan& keep);

// Large-sparse counterpart: zeroes pruned filters, their batchnorm
// scale/shift and the downstream input slices in place. Architecture and MAC
// count are unchanged. Intended as an equivalence oracle.
void apply_mask(ModelGraph& model, const KeepPlan& keep);

// Architecture of a pruned model, no weights.
ModelGraph prune_architecture(const ModelGraph& model, const PruneConfig& cfg);

// Resizes `tmpl` so its channel counts match the stored tensors, then adopts
// them as parameters. Used to reload pruned checkpoints.
ModelGraph adopt_tensors(const ModelGraph& tmpl, TensorMap tensors);

// "3,5,9"
std::string format_index_list(const std::vector<std::size_t>& idx);
std::vector<std::size_t> parse_index_list(const std::string& text);

}  // namespace prunebench
