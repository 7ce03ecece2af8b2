#include "prunebench/graph.hpp"

#include <algorithm>

#include "prunebench/error.hpp"

namespace prunebench {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Linear: return "linear";
    case LayerKind::BatchNorm2d: return "batchnorm2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Add: return "add";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

std::string to_string(ConvRole role) {
  switch (role) {
    case ConvRole::NonBlock: return "non-block";
    case ConvRole::BlockInternal: return "block-internal";
    case ConvRole::BlockLast: return "block-last";
    case ConvRole::Shortcut: return "shortcut";
  }
  return "?";
}

int ModelGraph::add_layer(LayerSpec spec) {
  if (find(spec.name)) throw ConfigError("duplicate layer name '" + spec.name + "'");
  const int self = static_cast<int>(layers_.size());
  for (int in : spec.inputs)
    if (in < kGraphInput || in >= self)
      throw ShapeError(spec.name, "input index " + std::to_string(in) + " is not an earlier layer");
  layers_.push_back(std::move(spec));
  return self;
}

int ModelGraph::conv(const std::string& name, int from, std::size_t in, std::size_t out,
                     std::size_t kernel, std::size_t stride, std::size_t padding, bool bias) {
  LayerSpec s;
  s.name = name;
  s.kind = LayerKind::Conv2d;
  s.inputs = {from};
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.bias = bias;
  return add_layer(std::move(s));
}

int ModelGraph::linear(const std::string& name, int from, std::size_t in, std::size_t out) {
  LayerSpec s;
  s.name = name;
  s.kind = LayerKind::Linear;
  s.inputs = {from};
  s.in_channels = in;
  s.out_channels = out;
  s.bias = true;
  return add_layer(std::move(s));
}

int ModelGraph::batchnorm(const std::string& name, int from, std::size_t channels) {
  LayerSpec s;
  s.name = name;
  s.kind = LayerKind::BatchNorm2d;
  s.inputs = {from};
  s.in_channels = channels;
  s.out_channels = channels;
  return add_layer(std::move(s));
}

int ModelGraph::relu(const std::string& name, int from) {
  LayerSpec s;
  s.name = name;
  s.kind = LayerKind::Relu;
  s.inputs = {from};
  return add_layer(std::move(s));
}

int ModelGraph::maxpool(const std::string& name, int from, std::size_t kernel, std::size_t stride,
                        std::size_t padding) {
  LayerSpec s;
  s.name = name;
  s.kind = LayerKind::MaxPool;
  s.inputs = {from};
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return add_layer(std::move(s));
}

int ModelGraph::avgpool(const std::string& name, int from, std::size_t kernel, std::size_t stride) {
  LayerSpec s;
  s.name = name;
  s.kind = LayerKind::AvgPool;
  s.inputs = {from};
  s.kernel = kernel;
  s.stride = stride == 0 ? kernel : stride;
  return add_layer(std::move(s));
}

int ModelGraph::add(const std::string& name, int a, int b) {
  LayerSpec s;
  s.name = name;
  s.kind = LayerKind::Add;
  s.inputs = {a, b};
  return add_layer(std::move(s));
}

int ModelGraph::flatten(const std::string& name, int from) {
  LayerSpec s;
  s.name = name;
  s.kind = LayerKind::Flatten;
  s.inputs = {from};
  return add_layer(std::move(s));
}

std::optional<int> ModelGraph::find(const std::string& name) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].name == name) return static_cast<int>(i);
  return std::nullopt;
}

int ModelGraph::index_of(const std::string& name) const {
  auto i = find(name);
  if (!i) throw ConfigError("no layer named '" + name + "'");
  return *i;
}

std::vector<int> ModelGraph::consumers(int node) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    for (int in : layers_[i].inputs)
      if (in == node) {
        out.push_back(static_cast<int>(i));
        break;
      }
  return out;
}

std::vector<std::pair<int, int>> ModelGraph::residual_edges() const {
  std::vector<std::pair<int, int>> edges;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].kind == LayerKind::Add)
      for (int in : layers_[i].inputs) edges.emplace_back(in, static_cast<int>(i));
  return edges;
}

std::vector<ParamInfo> ModelGraph::param_layout() const {
  std::vector<ParamInfo> out;
  for (const auto& l : layers_) {
    switch (l.kind) {
      case LayerKind::Conv2d:
        out.push_back({l.name + ".weight", {l.out_channels, l.in_channels, l.kernel, l.kernel}, true});
        if (l.bias) out.push_back({l.name + ".bias", {l.out_channels}, true});
        break;
      case LayerKind::Linear:
        out.push_back({l.name + ".weight", {l.out_channels, l.in_channels}, true});
        if (l.bias) out.push_back({l.name + ".bias", {l.out_channels}, true});
        break;
      case LayerKind::BatchNorm2d:
        out.push_back({l.name + ".weight", {l.out_channels}, true});
        out.push_back({l.name + ".bias", {l.out_channels}, true});
        out.push_back({l.name + ".running_mean", {l.out_channels}, false});
        out.push_back({l.name + ".running_var", {l.out_channels}, false});
        break;
      default:
        break;
    }
  }
  return out;
}

std::vector<std::string> ModelGraph::trainable_names() const {
  std::vector<std::string> names;
  for (auto& p : param_layout())
    if (p.trainable) names.push_back(p.name);
  return names;
}

std::vector<ActShape> ModelGraph::infer_shapes() const {
  return infer_shapes(input_.height, input_.width);
}

std::vector<ActShape> ModelGraph::infer_shapes(std::size_t height, std::size_t width) const {
  const ActShape in_shape{input_.channels, height, width, false};
  std::vector<ActShape> shapes(layers_.size());
  auto src = [&](int idx) -> const ActShape& { return idx == kGraphInput ? in_shape : shapes[idx]; };

  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.inputs.empty()) throw ShapeError(l.name, "layer has no inputs");
    const ActShape& x = src(l.inputs[0]);
    ActShape y = x;
    switch (l.kind) {
      case LayerKind::Conv2d: {
        if (x.flat) throw ShapeError(l.name, "conv2d on a flat input");
        if (x.c != l.in_channels)
          throw ShapeError(l.name, "expects " + std::to_string(l.in_channels) +
                                       " input channels, got " + std::to_string(x.c));
        if (l.kernel == 0 || l.stride == 0) throw ShapeError(l.name, "kernel and stride must be positive");
        if (x.h + 2 * l.padding < l.kernel || x.w + 2 * l.padding < l.kernel)
          throw ShapeError(l.name, "kernel larger than padded input");
        y.c = l.out_channels;
        y.h = (x.h + 2 * l.padding - l.kernel) / l.stride + 1;
        y.w = (x.w + 2 * l.padding - l.kernel) / l.stride + 1;
        break;
      }
      case LayerKind::Linear:
        if (!x.flat) throw ShapeError(l.name, "linear expects a flattened input");
        if (x.c != l.in_channels)
          throw ShapeError(l.name, "expects " + std::to_string(l.in_channels) + " features, got " +
                                       std::to_string(x.c));
        y = ActShape{l.out_channels, 1, 1, true};
        break;
      case LayerKind::BatchNorm2d:
        if (x.flat) throw ShapeError(l.name, "batchnorm2d on a flat input");
        if (x.c != l.in_channels)
          throw ShapeError(l.name, "expects " + std::to_string(l.in_channels) + " channels, got " +
                                       std::to_string(x.c));
        break;
      case LayerKind::Relu:
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        if (x.flat) throw ShapeError(l.name, "pooling on a flat input");
        if (l.kernel == 0) {
          y.h = y.w = 1;
        } else {
          if (x.h + 2 * l.padding < l.kernel || x.w + 2 * l.padding < l.kernel)
            throw ShapeError(l.name, "pool window larger than input");
          y.h = (x.h + 2 * l.padding - l.kernel) / l.stride + 1;
          y.w = (x.w + 2 * l.padding - l.kernel) / l.stride + 1;
        }
        break;
      }
      case LayerKind::Add: {
        if (l.inputs.size() != 2) throw ShapeError(l.name, "add needs exactly two inputs");
        const ActShape& b = src(l.inputs[1]);
        if (!(x == b))
          throw ShapeError(l.name, "add operands disagree: " + std::to_string(x.c) + "x" +
                                       std::to_string(x.h) + "x" + std::to_string(x.w) + " vs " +
                                       std::to_string(b.c) + "x" + std::to_string(b.h) + "x" +
                                       std::to_string(b.w));
        break;
      }
      case LayerKind::Flatten:
        y = ActShape{x.numel(), 1, 1, true};
        break;
    }
    if (l.kind != LayerKind::Add && l.inputs.size() != 1)
      throw ShapeError(l.name, "expects exactly one input");
    shapes[i] = y;
  }
  return shapes;
}

void ModelGraph::validate() const {
  if (layers_.empty()) throw ConfigError("model '" + family_ + "' has no layers");
  auto shapes = infer_shapes();
  const auto& out = shapes.back();
  if (!out.flat || out.c != input_.num_classes)
    throw ShapeError(layers_.back().name, "final layer must produce " +
                                              std::to_string(input_.num_classes) + " logits");
  if (!params_.empty()) {
    for (const auto& p : param_layout()) {
      auto it = params_.find(p.name);
      if (it == params_.end()) throw ConfigError("missing parameter '" + p.name + "'");
      if (it->second.shape() != p.shape)
        throw ShapeError(p.name, "parameter shape " + shape_to_string(it->second.shape()) +
                                     " does not match layout " + shape_to_string(p.shape));
    }
  }
}

const Tensor& ModelGraph::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("no parameter named '" + name + "'");
  return it->second;
}

Tensor& ModelGraph::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("no parameter named '" + name + "'");
  return it->second;
}

bool ModelGraph::materialized() const {
  auto layout = param_layout();
  return std::all_of(layout.begin(), layout.end(),
                     [&](const ParamInfo& p) { return params_.count(p.name) != 0; });
}

std::size_t ModelGraph::trainable_param_count() const {
  std::size_t n = 0;
  for (const auto& p : param_layout())
    if (p.trainable) n += shape_numel(p.shape);
  return n;
}

void ModelGraph::allocate_params() {
  params_.clear();
  for (const auto& p : param_layout()) params_.emplace(p.name, Tensor(p.shape));
}

}  // namespace prunebench
