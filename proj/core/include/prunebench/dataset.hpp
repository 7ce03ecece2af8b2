#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "prunebench/graph.hpp"
#include "prunebench/tensor.hpp"

namespace prunebench {

enum class DatasetKind { Cifar10, Synthetic };

// Parsed from "cifar10:<dir>[,train=N][,test=N]" or
// "synthetic:classes=10,train=2000,test=1000,size=16,seed=1[,noise=..]".
// Common options: pad=<crop padding, default 4>, augment=0|1.
struct DatasetSpec {
  DatasetKind kind = DatasetKind::Synthetic;
  std::filesystem::path path;  // CIFAR directory
  std::size_t classes = 10;
  std::size_t train = 2000;  // 0 = all available (CIFAR)
  std::size_t test = 1000;
  std::size_t size = 16;  // synthetic image side
  std::uint64_t seed = 1;
  double noise = 0.6;        // synthetic pixel noise std
  double distractor = 0.5;   // synthetic max weight of another class' pattern
  std::size_t pad = 4;
  bool augment = true;

  static DatasetSpec parse(const std::string& text);
  std::string to_string() const;  // canonical form

  InputSpec input_spec() const;
};

// One CIFAR binary record is 1 label byte + 3072 pixel bytes (R, G, B planes,
// each 32x32 row-major).
inline constexpr std::size_t kCifarImageBytes = 3 * 32 * 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarImageBytes;

struct RawImages {
  std::size_t channels = 3, height = 32, width = 32;
  std::vector<float> pixels;  // N x C x H x W, 0..255 for CIFAR
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
};

// Parses CIFAR-10 binary records; throws FormatError with the byte offset of
// a short or invalid record.
RawImages parse_cifar_binary(std::span<const std::uint8_t> bytes, std::size_t max_records = 0);
RawImages read_cifar_file(const std::filesystem::path& file, std::size_t max_records = 0);

// Per-channel normalized train/test split plus batching.
class Dataset {
 public:
  Dataset(DatasetSpec spec, RawImages train, RawImages test);

  const DatasetSpec& spec() const noexcept { return spec_; }
  InputSpec input_spec() const;
  std::size_t train_size() const noexcept { return train_.size(); }
  std::size_t test_size() const noexcept { return test_.size(); }
  const std::vector<float>& channel_mean() const noexcept { return mean_; }
  const std::vector<float>& channel_std() const noexcept { return std_; }

  struct Batch {
    Tensor images;
    std::vector<int> labels;
  };

  // Training batch; with augmentation on, each image gets a random
  // pad-and-crop and a random horizontal flip drawn from `rng`.
  Batch train_batch(std::span<const std::size_t> indices, std::mt19937_64* rng) const;
  Batch test_batch(std::size_t begin, std::size_t end) const;

 private:
  Batch gather(const RawImages& src, std::span<const std::size_t> indices, std::mt19937_64* rng) const;

  DatasetSpec spec_;
  RawImages train_, test_;
  std::vector<float> mean_, std_;
};

Dataset load_dataset(const DatasetSpec& spec);

// Deterministic class-conditional images: every class owns two smooth
// random prototypes; a sample is a randomly shifted and scaled prototype,
// blended with another class' prototype and Gaussian noise.
RawImages generate_synthetic(const DatasetSpec& spec, std::size_t count, std::uint64_t stream);

}  // namespace prunebench
