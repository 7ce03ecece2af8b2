#include "prunebench/model_zoo.hpp"

#include <charconv>
#include <sstream>

#include "prunebench/error.hpp"

namespace prunebench {
namespace {

struct BlockPorts {
  int out;
  std::size_t channels;
};

int conv_bn(ModelGraph& g, const std::string& prefix, const std::string& conv_name, const std::string& bn_name,
            int from, std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
            ConvRole role, bool prunable, int stage) {
  int c = g.conv(prefix + conv_name, from, in, out, k, stride, pad);
  auto& spec = g.mutable_layer(c);
  spec.role = role;
  spec.prunable = prunable;
  spec.stage = stage;
  return g.batchnorm(prefix + bn_name, c, out);
}

BlockPorts basic_block(ModelGraph& g, const std::string& prefix, int from, std::size_t in, std::size_t out,
                       std::size_t stride, int stage) {
  int x = conv_bn(g, prefix, "conv1", "bn1", from, in, out, 3, stride, 1, ConvRole::BlockInternal, true, stage);
  x = g.relu(prefix + "relu1", x);
  x = conv_bn(g, prefix, "conv2", "bn2", x, out, out, 3, 1, 1, ConvRole::BlockLast, false, stage);
  int skip = from;
  if (stride != 1 || in != out)
    skip = conv_bn(g, prefix, "shortcut.conv", "shortcut.bn", from, in, out, 1, stride, 0, ConvRole::Shortcut,
                   false, stage);
  x = g.add(prefix + "add", x, skip);
  return {g.relu(prefix + "relu2", x), out};
}

BlockPorts bottleneck_block(ModelGraph& g, const std::string& prefix, int from, std::size_t in, std::size_t width,
                            std::size_t stride, int stage) {
  const std::size_t out = width * 4;
  int x = conv_bn(g, prefix, "conv1", "bn1", from, in, width, 1, 1, 0, ConvRole::BlockInternal, true, stage);
  x = g.relu(prefix + "relu1", x);
  x = conv_bn(g, prefix, "conv2", "bn2", x, width, width, 3, stride, 1, ConvRole::BlockInternal, true, stage);
  x = g.relu(prefix + "relu2", x);
  x = conv_bn(g, prefix, "conv3", "bn3", x, width, out, 1, 1, 0, ConvRole::BlockLast, false, stage);
  int skip = from;
  if (stride != 1 || in != out)
    skip = conv_bn(g, prefix, "shortcut.conv", "shortcut.bn", from, in, out, 1, stride, 0, ConvRole::Shortcut,
                   false, stage);
  x = g.add(prefix + "add", x, skip);
  return {g.relu(prefix + "relu3", x), out};
}

void classifier_head(ModelGraph& g, int from, std::size_t channels, std::size_t classes, int stage) {
  int x = g.avgpool("pool", from);
  x = g.flatten("flatten", x);
  int fc = g.linear("fc", x, channels, classes);
  g.mutable_layer(fc).stage = stage;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

int parse_int(std::string_view s, std::string_view what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("bad " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}

}  // namespace

ModelGraph build_resnet_cifar(int depth, InputSpec input) {
  if (depth < 8 || (depth - 2) % 6 != 0)
    throw ConfigError("CIFAR ResNet depth must be 6n+2 with n >= 1, got " + std::to_string(depth));
  const int n = (depth - 2) / 6;
  ModelGraph g("resnet" + std::to_string(depth) + "-cifar", input);
  int x = conv_bn(g, "", "conv1", "bn1", kGraphInput, input.channels, 16, 3, 1, 1, ConvRole::NonBlock, false, 0);
  x = g.relu("relu1", x);
  std::size_t in = 16;
  const std::size_t widths[3] = {16, 32, 64};
  for (int s = 0; s < 3; ++s)
    for (int b = 0; b < n; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      auto p = basic_block(g, "layer" + std::to_string(s + 1) + "." + std::to_string(b) + ".", x, in, widths[s],
                           stride, s + 1);
      x = p.out;
      in = p.channels;
    }
  classifier_head(g, x, in, input.num_classes, 4);
  g.validate();
  return g;
}

std::vector<int> parse_vgg_config(std::string_view text) {
  if (text == "vgg11") return {64, 0, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512};
  if (text == "vgg13") return {64, 64, 0, 128, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512};
  if (text == "vgg16") return {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512};
  if (text == "vgg19")
    return {64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512};
  std::vector<int> cfg;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find(',', pos);
    if (end == std::string_view::npos) end = text.size();
    auto tok = text.substr(pos, end - pos);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (tok == "M" || tok == "m") {
      cfg.push_back(0);
    } else if (!tok.empty()) {
      int v = parse_int(tok, "VGG width");
      if (v <= 0) throw ConfigError("VGG widths must be positive");
      cfg.push_back(v);
    }
    pos = end + 1;
  }
  return cfg;
}

ModelGraph build_vgg_cifar(const std::vector<int>& config, InputSpec input, std::string family) {
  bool any_conv = false;
  for (int c : config) any_conv |= c > 0;
  if (!any_conv) throw ConfigError("VGG config has no conv layers");
  ModelGraph g(std::move(family), input);
  int x = kGraphInput;
  std::size_t in = input.channels;
  int conv_index = 0, pool_index = 0;
  for (int c : config) {
    if (c == 0) {
      x = g.maxpool("pool" + std::to_string(++pool_index), x, 2, 2);
      continue;
    }
    const std::string id = std::to_string(++conv_index);
    const bool first = conv_index == 1;
    x = conv_bn(g, "", "conv" + id, "bn" + id, x, in, static_cast<std::size_t>(c), 3, 1, 1, ConvRole::NonBlock,
                !first, first ? 0 : pool_index + 1);
    x = g.relu("relu" + id, x);
    in = static_cast<std::size_t>(c);
  }
  classifier_head(g, x, in, input.num_classes, pool_index + 2);
  g.validate();
  return g;
}

ModelGraph build_static_resnet_imagenet(int depth, std::size_t num_classes) {
  if (depth != 34 && depth != 50)
    throw ConfigError("static ImageNet ResNet supports depth 34 or 50, got " + std::to_string(depth));
  InputSpec input{3, 224, 224, num_classes};
  ModelGraph g("resnet" + std::to_string(depth) + "-imagenet", input);
  int x = conv_bn(g, "", "conv1", "bn1", kGraphInput, 3, 64, 7, 2, 3, ConvRole::NonBlock, false, 0);
  x = g.relu("relu1", x);
  x = g.maxpool("maxpool", x, 3, 2, 1);
  const int blocks[4] = {3, 4, 6, 3};
  const std::size_t widths[4] = {64, 128, 256, 512};
  std::size_t in = 64;
  for (int s = 0; s < 4; ++s)
    for (int b = 0; b < blocks[s]; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      const std::string prefix = "layer" + std::to_string(s + 1) + "." + std::to_string(b) + ".";
      auto p = depth == 34 ? basic_block(g, prefix, x, in, widths[s], stride, s + 1)
                           : bottleneck_block(g, prefix, x, in, widths[s], stride, s + 1);
      x = p.out;
      in = p.channels;
    }
  classifier_head(g, x, in, num_classes, 5);
  g.validate();
  return g;
}

ModelGraph build_tiny(InputSpec input) {
  ModelGraph g("tiny", input);
  int x = conv_bn(g, "", "conv1", "bn1", kGraphInput, input.channels, 8, 3, 1, 1, ConvRole::NonBlock, false, 0);
  x = g.relu("relu1", x);
  auto p = basic_block(g, "layer1.0.", x, 8, 8, 1, 1);
  classifier_head(g, p.out, 8, input.num_classes, 2);
  g.validate();
  return g;
}

const std::vector<ZooEntry>& zoo_entries() {
  static const std::vector<ZooEntry> entries = [] {
    std::vector<ZooEntry> e;
    e.push_back({"tiny", "stem conv + one 8-wide residual block", {3, 8, 8, 10}, true, 0, 0});
    for (int d : {8, 14, 20, 32, 44, 56, 110})
      e.push_back({"resnet" + std::to_string(d) + "-cifar", "CIFAR ResNet, 6n+2 basic blocks at 16/32/64",
                   {3, 32, 32, 10}, true, 0, 0});
    e.push_back({"vgg11-cifar", "VGG11 with batchnorm, global-pool head", {3, 32, 32, 10}, true, 0, 0});
    e.push_back({"vgg19-cifar", "VGG19 with batchnorm, global-pool head", {3, 32, 32, 100}, true, 0, 0});
    e.push_back({"resnet34-imagenet", "ImageNet ResNet34 (MAC accounting only)", {3, 224, 224, 1000}, false, 0, 0});
    e.push_back({"resnet50-imagenet", "ImageNet ResNet50 (MAC accounting only)", {3, 224, 224, 1000}, false, 0, 0});
    // Published reference sizes (resnet56 @ CIFAR-10: 0.85M params / 0.125
    // GMAC; vgg19 @ CIFAR-100: 20.08M / 0.40 GMAC; resnet34 @ 224: 3.66 GMAC).
    for (auto& z : e) {
      if (z.name == "resnet56-cifar") z.expected_params = 850000, z.expected_macs = 125000000;
      if (z.name == "vgg19-cifar") z.expected_params = 20080000, z.expected_macs = 400000000;
      if (z.name == "resnet34-imagenet") z.expected_macs = 3660000000ull;
    }
    return e;
  }();
  return entries;
}

ModelGraph build_model(std::string_view name, const InputSpec& input) {
  if (name == "tiny") return build_tiny(input);
  if (starts_with(name, "resnet") && name.ends_with("-imagenet")) {
    int depth = parse_int(name.substr(6, name.size() - 6 - 9), "ResNet depth");
    return build_static_resnet_imagenet(depth, input.num_classes);
  }
  if (starts_with(name, "resnet") && name.ends_with("-cifar")) {
    int depth = parse_int(name.substr(6, name.size() - 6 - 6), "ResNet depth");
    return build_resnet_cifar(depth, input);
  }
  if (starts_with(name, "vgg") && name.ends_with("-cifar")) {
    auto preset = name.substr(0, name.size() - 6);
    return build_vgg_cifar(parse_vgg_config(preset), input, std::string(name));
  }
  throw ConfigError("unknown zoo model '" + std::string(name) + "'");
}

ModelGraph build_model(std::string_view name) {
  for (const auto& z : zoo_entries())
    if (z.name == name) return build_model(name, z.reference_input);
  return build_model(name, InputSpec{});
}

}  // namespace prunebench
