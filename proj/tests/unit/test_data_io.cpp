#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "prunebench/checkpoint.hpp"
#include "prunebench/dataset.hpp"
#include "prunebench/error.hpp"

using namespace prunebench;

namespace {

std::vector<std::uint8_t> cifar_records(std::size_t n) {
  std::vector<std::uint8_t> bytes;
  for (std::size_t i = 0; i < n; ++i) {
    bytes.push_back(static_cast<std::uint8_t>(i % 10));
    for (std::size_t j = 0; j < kCifarImageBytes; ++j) bytes.push_back(static_cast<std::uint8_t>((i * 7 + j) % 256));
  }
  return bytes;
}

}  // namespace

TEST(Cifar, RecordLayoutIsLabelThenPlanes) {
  const auto bytes = cifar_records(3);
  const RawImages r = parse_cifar_binary(bytes);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r.labels, (std::vector<int>{0, 1, 2}));
  // Record 1, green plane, row 2, column 5.
  const std::size_t j = 1024 + 2 * 32 + 5;
  EXPECT_EQ(r.pixels[kCifarImageBytes + j], static_cast<float>((7 + j) % 256));
  EXPECT_EQ(parse_cifar_binary(bytes, 2).size(), 2u);
}

TEST(Cifar, ShortAndInvalidRecordsReportOffsets) {
  auto bytes = cifar_records(2);
  bytes.pop_back();
  try {
    parse_cifar_binary(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.byte_offset(), kCifarRecordBytes);
  }
  auto bad = cifar_records(2);
  bad[kCifarRecordBytes] = 12;
  try {
    parse_cifar_binary(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.byte_offset(), kCifarRecordBytes);
  }
  EXPECT_THROW(read_cifar_file("/nonexistent/data_batch_1.bin"), Error);
}

TEST(DatasetSpecText, ParseAndCanonicalForm) {
  const DatasetSpec s = DatasetSpec::parse("synthetic:classes=4,train=100,test=50,size=8,seed=3,noise=1");
  EXPECT_EQ(s.classes, 4u);
  EXPECT_EQ(s.size, 8u);
  EXPECT_DOUBLE_EQ(s.noise, 1.0);
  EXPECT_EQ(DatasetSpec::parse(s.to_string()).to_string(), s.to_string());
  EXPECT_THROW(DatasetSpec::parse("mnist"), ConfigError);
  EXPECT_THROW(DatasetSpec::parse("synthetic:colour=1"), ConfigError);
  EXPECT_THROW(DatasetSpec::parse("cifar10"), ConfigError);
  EXPECT_EQ(DatasetSpec::parse("cifar10:/data,train=500").input_spec().num_classes, 10u);
}

TEST(Synthetic, DeterministicAndBalanced) {
  const DatasetSpec s = DatasetSpec::parse("synthetic:classes=5,train=100,test=50,size=8,seed=3");
  const RawImages a = generate_synthetic(s, 100, 0);
  EXPECT_EQ(a.pixels, generate_synthetic(s, 100, 0).pixels);
  EXPECT_NE(a.pixels, generate_synthetic(s, 100, 1).pixels);
  std::vector<int> count(5);
  for (int l : a.labels) ++count[l];
  for (int c : count) EXPECT_EQ(c, 20);
}

TEST(Dataset, TrainStatisticsNormalizeToUnitScale) {
  const Dataset d = load_dataset(DatasetSpec::parse("synthetic:classes=4,train=64,test=32,size=8,seed=2"));
  std::vector<std::size_t> all(d.train_size());
  std::iota(all.begin(), all.end(), 0);
  const auto b = d.train_batch(all, nullptr);
  const std::size_t plane = 64;
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    for (std::size_t n = 0; n < all.size(); ++n)
      for (std::size_t j = 0; j < plane; ++j) sum += b.images[(n * 3 + c) * plane + j];
    const double mean = sum / (all.size() * plane);
    for (std::size_t n = 0; n < all.size(); ++n)
      for (std::size_t j = 0; j < plane; ++j) sq += std::pow(b.images[(n * 3 + c) * plane + j] - mean, 2);
    EXPECT_NEAR(mean, 0.0, 1e-4);
    EXPECT_NEAR(std::sqrt(sq / (all.size() * plane)), 1.0, 1e-3);
  }
}

TEST(Dataset, AugmentationOnlyWithRngAndOnlyInTraining) {
  const Dataset d = load_dataset(DatasetSpec::parse("synthetic:classes=4,train=16,test=8,size=8,seed=2"));
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5, 6, 7};
  const auto plain = d.train_batch(idx, nullptr);
  std::mt19937_64 rng(1);
  const auto aug = d.train_batch(idx, &rng);
  EXPECT_EQ(plain.labels, aug.labels);
  EXPECT_NE(plain.images, aug.images);
  EXPECT_EQ(d.test_batch(0, 8).images, d.test_batch(0, 8).images);

  const Dataset off = load_dataset(DatasetSpec::parse("synthetic:classes=4,train=16,test=8,size=8,seed=2,augment=0"));
  std::mt19937_64 rng2(1);
  EXPECT_EQ(off.train_batch(idx, &rng2).images, off.train_batch(idx, nullptr).images);
}

TEST(Checkpoint, RoundTripIsBitExactAndCanonical) {
  TensorMap m;
  m["b"] = Tensor({2, 3}, std::vector<float>{1, -2, 3.5f, 0, -0.0f, 1e-30f});
  m["a"] = Tensor({1}, std::vector<float>{std::nanf("")});
  const std::string bytes = serialize_tensors(m);
  EXPECT_EQ(bytes.substr(0, 8), std::string(kCheckpointMagic));
  const TensorMap back = deserialize_tensors(bytes);
  EXPECT_EQ(serialize_tensors(back), bytes);
  EXPECT_EQ(back.at("b"), m.at("b"));

  const auto path = std::filesystem::temp_directory_path() / "prunebench_ckpt_test.ckpt";
  save_checkpoint(path, m);
  EXPECT_EQ(serialize_tensors(load_checkpoint(path)), bytes);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptInputRaisesFormatErrorWithOffset) {
  TensorMap m;
  m["w"] = Tensor({4}, 1.0f);
  std::string bytes = serialize_tensors(m);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    deserialize_tensors(bad_magic);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.byte_offset(), 0u);
  }
  const std::string truncated = bytes.substr(0, bytes.size() - 3);
  try {
    deserialize_tensors(truncated);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_GT(e.byte_offset(), 12u);
    EXPECT_LE(e.byte_offset(), truncated.size());
  }
  EXPECT_THROW(load_checkpoint("/nonexistent.ckpt"), Error);
}
