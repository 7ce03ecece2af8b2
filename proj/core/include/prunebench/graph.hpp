#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prunebench/tensor.hpp"

namespace prunebench {

enum class LayerKind { Conv2d, Linear, BatchNorm2d, Relu, AvgPool, MaxPool, Add, Flatten };

std::string to_string(LayerKind kind);

// Position of a convolution relative to residual blocks. Pruning policy is
// driven by the separate `prunable` flag; the role is kept for reporting and
// for the sparing law checks.
enum class ConvRole {
  NonBlock,       // stem convs, plain-chain convs
  BlockInternal,  // block convs whose output stays inside the block
  BlockLast,      // block conv feeding the residual add
  Shortcut,       // projection on the skip path
};

std::string to_string(ConvRole role);

inline constexpr int kGraphInput = -1;

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Relu;
  std::vector<int> inputs;  // producer layer indices, kGraphInput for the image batch

  std::size_t in_channels = 0;  // conv/linear in, batchnorm channel count
  std::size_t out_channels = 0;
  std::size_t kernel = 0;  // conv/pool window; 0 on a pool means global
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = false;

  ConvRole role = ConvRole::NonBlock;
  bool prunable = false;
  int stage = 0;  // index into stage-wise pruning-ratio vectors
};

struct InputSpec {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t num_classes = 10;
};

// Activation shape of one node for a single sample: (c, h, w), or a flat
// feature vector of length c when `flat` is set.
struct ActShape {
  std::size_t c = 0;
  std::size_t h = 1;
  std::size_t w = 1;
  bool flat = false;

  std::size_t numel() const { return c * h * w; }
  friend bool operator==(const ActShape&, const ActShape&) = default;
};

struct ParamInfo {
  std::string name;
  Shape shape;
  bool trainable = true;
};

// Ordered layer DAG with a name -> tensor parameter store. Layers are kept in
// topological order; the last layer produces the logits.
class ModelGraph {
 public:
  ModelGraph() = default;
  ModelGraph(std::string family, InputSpec input) : family_(std::move(family)), input_(input) {}

  const std::string& family() const noexcept { return family_; }
  const InputSpec& input() const noexcept { return input_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const LayerSpec& layer(std::size_t i) const { return layers_.at(i); }
  std::size_t size() const noexcept { return layers_.size(); }

  int add_layer(LayerSpec spec);
  int conv(const std::string& name, int from, std::size_t in, std::size_t out, std::size_t kernel,
           std::size_t stride, std::size_t padding, bool bias = false);
  int linear(const std::string& name, int from, std::size_t in, std::size_t out);
  int batchnorm(const std::string& name, int from, std::size_t channels);
  int relu(const std::string& name, int from);
  int maxpool(const std::string& name, int from, std::size_t kernel, std::size_t stride,
              std::size_t padding = 0);
  int avgpool(const std::string& name, int from, std::size_t kernel = 0, std::size_t stride = 0);
  int add(const std::string& name, int a, int b);
  int flatten(const std::string& name, int from);

  // Mutable access used by builders and by the pruner's rebuild.
  LayerSpec& mutable_layer(std::size_t i) { return layers_.at(i); }

  std::optional<int> find(const std::string& name) const;
  int index_of(const std::string& name) const;

  // Layers consuming the output of `node` (kGraphInput allowed), ascending.
  std::vector<int> consumers(int node) const;

  // (source, add) pairs where `source` reaches the add along the skip path.
  std::vector<std::pair<int, int>> residual_edges() const;

  // Parameter layout implied by the layer list, in layer order.
  std::vector<ParamInfo> param_layout() const;
  std::vector<std::string> trainable_names() const;

  // Per-node output shapes; throws ShapeError naming the first bad layer.
  std::vector<ActShape> infer_shapes() const;
  std::vector<ActShape> infer_shapes(std::size_t height, std::size_t width) const;

  // Structural checks: topological inputs, add fan-in, channel agreement,
  // and (when materialized) parameter shapes.
  void validate() const;

  std::map<std::string, Tensor>& params() noexcept { return params_; }
  const std::map<std::string, Tensor>& params() const noexcept { return params_; }
  const Tensor& param(const std::string& name) const;
  Tensor& param(const std::string& name);

  // True when every entry of the layout has a stored tensor.
  bool materialized() const;
  std::size_t trainable_param_count() const;

  // Allocates zero-filled storage for every parameter in the layout.
  void allocate_params();

 private:
  std::string family_;
  InputSpec input_;
  std::vector<LayerSpec> layers_;
  std::map<std::string, Tensor> params_;
};

}  // namespace prunebench
