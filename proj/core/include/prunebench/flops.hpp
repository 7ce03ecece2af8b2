#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "prunebench/graph.hpp"

namespace prunebench {

// MAC: one multiply-accumulate counts 1. TwoMac: counts 2 (multiply + add),
// the convention behind most "FLOPs" figures quoted for CIFAR models.
enum class FlopsConvention { Mac, TwoMac };

std::string to_string(FlopsConvention c);

struct LayerCost {
  std::string name;
  LayerKind kind;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
};

struct FlopsReport {
  std::vector<LayerCost> layers;
  std::uint64_t total_macs = 0;
  std::uint64_t total_params = 0;
  FlopsConvention convention = FlopsConvention::Mac;

  // Total in the report's convention.
  double total() const;
};

// Conv: out_c*out_h*out_w*in_c*k*k. Linear: in*out. Batchnorm, activations,
// pooling, add and flatten count zero. Parameters are the trainable tensors.
FlopsReport count_flops(const ModelGraph& model, std::size_t height, std::size_t width,
                        FlopsConvention convention = FlopsConvention::Mac);
FlopsReport count_flops(const ModelGraph& model, FlopsConvention convention = FlopsConvention::Mac);

// k = F_dense / F_pruned. Throws on convention mismatch or an empty pruned model.
double speedup(const FlopsReport& dense, const FlopsReport& pruned);

// Two-column text table (layer, MACs) plus totals.
std::string format_flops_table(const FlopsReport& report);
// One "layer,kind,macs,params" row per layer after a header row.
std::string format_flops_csv(const FlopsReport& report);

}  // namespace prunebench
