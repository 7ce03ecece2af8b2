#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "prunebench/graph.hpp"

namespace prunebench {

// CIFAR-style residual net of depth 6n+2: a 3x3 stem, three stages of n
// basic blocks at widths 16/32/64, global average pool, linear classifier.
// Where the width changes, the skip path is a strided 1x1 conv + batchnorm.
// The first conv of each block is prunable; stem, shortcut, block-last convs
// and the classifier are spared.
ModelGraph build_resnet_cifar(int depth, InputSpec input = {3, 32, 32, 10});

// Plain conv chain. `config` lists output widths, 0 meaning a 2x2 max pool.
// Every conv is followed by batchnorm + ReLU; the head is a global average
// pool and one linear layer. All convs except the first are prunable.
ModelGraph build_vgg_cifar(const std::vector<int>& config, InputSpec input = {3, 32, 32, 10},
                           std::string family = "vgg-cifar");

// Parses "64,64,M,128,..." (or a named preset vgg11/vgg13/vgg16/vgg19).
std::vector<int> parse_vgg_config(std::string_view text);

// ImageNet ResNet34 (basic blocks) or ResNet50 (bottlenecks) at 3x224x224.
// Parameters are not materialized: the graph exists for MAC accounting and
// structural pruning only. Stage ids: 0 stem, 1..4 residual stages, 5 fc.
// In bottlenecks the first 1x1 and the 3x3 are prunable; the last 1x1 is not.
ModelGraph build_static_resnet_imagenet(int depth, std::size_t num_classes = 1000);

// Stem conv + one residual block of width 8; used by fast tests.
ModelGraph build_tiny(InputSpec input = {3, 8, 8, 10});

struct ZooEntry {
  std::string name;
  std::string description;
  InputSpec reference_input;
  bool trainable = true;
  std::size_t expected_params = 0;  // at reference input, 0 if not published
  std::size_t expected_macs = 0;
};

const std::vector<ZooEntry>& zoo_entries();

// Builds a zoo model by name, e.g. "resnet14-cifar", "resnet56-cifar",
// "vgg19-cifar", "tiny", "resnet34-imagenet". For trainable entries the
// input spec (image size, class count) comes from `input`; for ImageNet
// graphs only `input.num_classes` is honoured.
ModelGraph build_model(std::string_view name, const InputSpec& input);
ModelGraph build_model(std::string_view name);

}  // namespace prunebench
