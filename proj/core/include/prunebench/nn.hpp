#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "prunebench/graph.hpp"
#include "prunebench/tensor.hpp"

namespace prunebench {

inline constexpr float kBatchNormEpsilon = 1e-5f;
inline constexpr float kBatchNormMomentum = 0.1f;

enum class Mode { Train, Eval };

// Per-node intermediates kept by a training-mode forward pass for backward.
struct ForwardCache {
  std::vector<Tensor> outputs;                     // one per layer
  std::vector<Tensor> bn_normalized;               // x-hat, batchnorm layers only
  std::vector<std::vector<float>> bn_inv_std;      // batchnorm layers only
  std::vector<std::vector<std::uint32_t>> argmax;  // maxpool layers only
};

using GradientSet = std::map<std::string, Tensor>;

struct LossAndGrads {
  float loss = 0.0f;
  GradientSet grads;
};

// Eval-mode inference: batchnorm uses running statistics, nothing is mutated.
Tensor forward(const ModelGraph& model, const Tensor& batch);

// Forward in either mode. Train mode normalizes with batch statistics and
// updates the running statistics in `model`.
Tensor forward(ModelGraph& model, const Tensor& batch, Mode mode, ForwardCache* cache = nullptr);

// Mean softmax cross-entropy of `logits` against `labels`; `dlogits`
// receives d(loss)/d(logits) when non-null.
float cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* dlogits = nullptr);

// Train-mode forward + backward. `batch_index` is only used for error
// reporting when the loss is not finite.
LossAndGrads backward(ModelGraph& model, const Tensor& batch, std::span<const int> labels,
                      std::size_t batch_index = 0);

struct OptimizerState {
  float learning_rate = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  std::map<std::string, Tensor> velocity;
};

// Momentum SGD with coupled weight decay:
//   v <- m*v + g + wd*w;  w <- w - lr*v
void sgd_step(std::map<std::string, Tensor>& params, const GradientSet& grads,
              OptimizerState& state);

// Fan-in scaled init for conv (He normal) and linear (uniform +-1/sqrt(fan_in));
// batchnorm scale 1, shift 0, running mean 0, running var 1. Each tensor draws
// from its own stream derived from (seed, name), so the result depends only on
// the parameter's name and shape.
void init_parameters(ModelGraph& model, std::uint64_t seed);

// Index of the max logit per row, lowest index on ties.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace prunebench
