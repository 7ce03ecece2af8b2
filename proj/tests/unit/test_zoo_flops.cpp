#include <gtest/gtest.h>

#include <random>

#include "prunebench/error.hpp"
#include "prunebench/flops.hpp"
#include "prunebench/model_zoo.hpp"
#include "prunebench/pruner.hpp"
#include "reference.hpp"

using namespace prunebench;

namespace {

// MACs re-derived from inferred activation shapes.
std::uint64_t oracle_macs(const ModelGraph& m) {
  const auto shapes = m.infer_shapes();
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto& l = m.layer(i);
    if (l.kind == LayerKind::Conv2d)
      total += shapes[i].c * shapes[i].h * shapes[i].w * l.in_channels * l.kernel * l.kernel;
    else if (l.kind == LayerKind::Linear)
      total += l.in_channels * l.out_channels;
  }
  return total;
}

std::uint64_t oracle_params(const ModelGraph& m) {
  std::uint64_t total = 0;
  for (const auto& l : m.layers()) {
    if (l.kind == LayerKind::Conv2d) total += l.out_channels * l.in_channels * l.kernel * l.kernel;
    if (l.kind == LayerKind::Linear) total += l.out_channels * l.in_channels;
    if ((l.kind == LayerKind::Conv2d || l.kind == LayerKind::Linear) && l.bias) total += l.out_channels;
    if (l.kind == LayerKind::BatchNorm2d) total += 2 * l.in_channels;
  }
  return total;
}

double speedup_of(const ModelGraph& dense, const PruneConfig& cfg) {
  return speedup(count_flops(dense), count_flops(prune_architecture(dense, cfg)));
}

}  // namespace

TEST(Zoo, ResNet56MatchesPublishedSize) {
  const ModelGraph m = build_model("resnet56-cifar");
  const auto r = count_flops(m, FlopsConvention::TwoMac);
  EXPECT_NEAR(r.total_params / 1e6, 0.85, 0.85 * 0.01);
  EXPECT_NEAR(r.total() / 1e9, 0.25, 0.25 * 0.05);
}

TEST(Zoo, Vgg19MatchesPublishedSize) {
  const ModelGraph m = build_model("vgg19-cifar");
  const auto r = count_flops(m, FlopsConvention::TwoMac);
  EXPECT_NEAR(r.total_params / 1e6, 20.08, 20.08 * 0.01);
  EXPECT_NEAR(r.total() / 1e9, 0.80, 0.80 * 0.05);
}

TEST(Zoo, ResNet34ImageNetMacs) {
  const auto r = count_flops(build_model("resnet34-imagenet"));
  EXPECT_NEAR(r.total() / 1e9, 3.66, 3.66 * 0.05);
}

TEST(Zoo, EveryEntryBuildsAndValidates) {
  for (const auto& z : zoo_entries()) {
    const ModelGraph m = build_model(z.name);
    EXPECT_NO_THROW(m.validate()) << z.name;
    EXPECT_EQ(m.infer_shapes().back().c, z.reference_input.num_classes) << z.name;
  }
}

TEST(Zoo, RejectsBadNamesAndDepths) {
  EXPECT_THROW(build_model("resnet10-cifar"), ConfigError);
  EXPECT_THROW(build_model("alexnet"), ConfigError);
  EXPECT_THROW(parse_vgg_config("64,X,128"), ConfigError);
  EXPECT_EQ(parse_vgg_config("64,M,128").size(), 3u);
}

TEST(Zoo, CifarResNetSparingRoles) {
  const ModelGraph m = build_model("resnet20-cifar");
  for (const auto& l : m.layers()) {
    if (l.kind != LayerKind::Conv2d) continue;
    EXPECT_EQ(l.prunable, l.role == ConvRole::BlockInternal) << l.name;
  }
  EXPECT_FALSE(m.layer(static_cast<std::size_t>(m.index_of("conv1"))).prunable);
}

TEST(Flops, CountsMatchShapeOracleOnZooAndRandomGraphs) {
  for (const char* name : {"tiny", "resnet20-cifar", "vgg16-cifar", "resnet50-imagenet"}) {
    const ModelGraph m = build_model(name);
    const auto r = count_flops(m);
    EXPECT_EQ(r.total_macs, oracle_macs(m)) << name;
    EXPECT_EQ(r.total_params, oracle_params(m)) << name;
  }
  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) {
    const ModelGraph m = i % 2 ? reftest::random_resnet(rng) : reftest::random_chain(rng);
    EXPECT_EQ(count_flops(m).total_macs, oracle_macs(m));
  }
}

TEST(Flops, TwoMacDoublesAndSpeedupChecksConvention) {
  const ModelGraph m = build_model("resnet20-cifar");
  const auto a = count_flops(m, FlopsConvention::Mac);
  const auto b = count_flops(m, FlopsConvention::TwoMac);
  EXPECT_DOUBLE_EQ(b.total(), 2.0 * a.total());
  EXPECT_THROW(speedup(a, b), Error);
  EXPECT_DOUBLE_EQ(speedup(a, a), 1.0);
}

TEST(Flops, NonComputeLayersCostNothing) {
  const auto r = count_flops(build_model("resnet20-cifar"));
  for (const auto& l : r.layers)
    if (l.kind != LayerKind::Conv2d && l.kind != LayerKind::Linear) EXPECT_EQ(l.macs, 0u) << l.name;
}

TEST(Flops, CsvHasHeaderAndOneRowPerLayer) {
  const ModelGraph m = build_tiny();
  const std::string csv = format_flops_csv(count_flops(m));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "layer,kind,macs,params");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), m.size() + 1);
}

TEST(Flops, ImageNet100ResNet34UniformRatios) {
  const ModelGraph dense = build_model("resnet34-imagenet", InputSpec{3, 224, 224, 100});
  struct Row {
    double ratio, gmacs, k;
  };
  for (const Row& row : {Row{0.1, 3.30, 1.11}, Row{0.3, 2.59, 1.41}, Row{0.5, 1.90, 1.93}, Row{0.7, 1.19, 3.09},
                         Row{0.9, 0.48, 7.68}, Row{0.95, 0.30, 12.06}}) {
    PruneConfig cfg;
    cfg.ratio = row.ratio;
    const auto pruned = count_flops(prune_architecture(dense, cfg));
    // The table prints two decimals, so allow half a unit of the last digit.
    EXPECT_NEAR(pruned.total() / 1e9, row.gmacs, row.gmacs * 0.03 + 0.005) << row.ratio;
    EXPECT_NEAR(speedup(count_flops(dense), pruned), row.k, row.k * 0.03) << row.ratio;
  }
}

TEST(Flops, ResNet50StageVectors) {
  const ModelGraph dense = build_model("resnet50-imagenet");
  PruneConfig a, b;
  a.stage_ratios = {0, 0.60, 0.60, 0.60, 0.21, 0};
  b.stage_ratios = {0, 0.74, 0.74, 0.60, 0.21, 0};
  EXPECT_NEAR(speedup_of(dense, a), 2.31, 2.31 * 0.05);
  EXPECT_NEAR(speedup_of(dense, b), 2.56, 2.56 * 0.05);
}

TEST(Flops, ResNet56HalfPruned) {
  PruneConfig cfg;
  cfg.ratio = 0.5;
  EXPECT_NEAR(speedup_of(build_model("resnet56-cifar"), cfg), 1.99, 1.99 * 0.03);
}
