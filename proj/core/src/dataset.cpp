#include "prunebench/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "prunebench/digest.hpp"
#include "prunebench/error.hpp"

namespace prunebench {
namespace {

std::vector<std::pair<std::string, std::string>> split_options(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    auto eq = tok.find('=');
    if (eq == std::string::npos) out.emplace_back(tok, "");
    else out.emplace_back(tok.substr(0, eq), tok.substr(eq + 1));
  }
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("dataset option " + key + " expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("dataset option " + key + " expects a number, got '" + v + "'");
  }
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

DatasetSpec DatasetSpec::parse(const std::string& text) {
  DatasetSpec s;
  auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto opts = split_options(rest);
  if (kind == "cifar10") {
    s.kind = DatasetKind::Cifar10;
    s.train = 0;
    s.test = 0;
    s.size = 32;
    if (opts.empty() || !opts.front().second.empty()) throw ConfigError("cifar10 dataset needs a directory: cifar10:<dir>");
    s.path = opts.front().first;
    opts.erase(opts.begin());
  } else if (kind == "synthetic") {
    s.kind = DatasetKind::Synthetic;
  } else {
    throw ConfigError("unknown dataset kind '" + kind + "' (expected cifar10 or synthetic)");
  }
  for (const auto& [k, v] : opts) {
    if (k == "train") s.train = to_size(k, v);
    else if (k == "test") s.test = to_size(k, v);
    else if (k == "pad") s.pad = to_size(k, v);
    else if (k == "augment") s.augment = to_size(k, v) != 0;
    else if (s.kind == DatasetKind::Synthetic && k == "classes") s.classes = to_size(k, v);
    else if (s.kind == DatasetKind::Synthetic && k == "size") s.size = to_size(k, v);
    else if (s.kind == DatasetKind::Synthetic && k == "seed") s.seed = to_size(k, v);
    else if (s.kind == DatasetKind::Synthetic && k == "noise") s.noise = to_double(k, v);
    else if (s.kind == DatasetKind::Synthetic && k == "distractor") s.distractor = to_double(k, v);
    else throw ConfigError("unknown dataset option '" + k + "'");
  }
  if (s.kind == DatasetKind::Synthetic) {
    if (s.classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
    if (s.size < 4) throw ConfigError("synthetic image size must be at least 4");
    if (s.train == 0 || s.test == 0) throw ConfigError("synthetic dataset needs positive train/test sizes");
  }
  return s;
}

std::string DatasetSpec::to_string() const {
  std::ostringstream os;
  if (kind == DatasetKind::Cifar10) {
    os << "cifar10:" << path.string() << ",train=" << train << ",test=" << test;
  } else {
    os << "synthetic:classes=" << classes << ",train=" << train << ",test=" << test << ",size=" << size
       << ",seed=" << seed << ",noise=" << fmt_double(noise) << ",distractor=" << fmt_double(distractor);
  }
  os << ",pad=" << pad << ",augment=" << (augment ? 1 : 0);
  return os.str();
}

InputSpec DatasetSpec::input_spec() const {
  if (kind == DatasetKind::Cifar10) return {3, 32, 32, 10};
  return {3, size, size, classes};
}

RawImages parse_cifar_binary(std::span<const std::uint8_t> bytes, std::size_t max_records) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t complete = bytes.size() / kCifarRecordBytes;
    throw FormatError("CIFAR file length " + std::to_string(bytes.size()) + " is not a multiple of " +
                          std::to_string(kCifarRecordBytes) + "-byte records",
                      complete * kCifarRecordBytes);
  }
  std::size_t n = bytes.size() / kCifarRecordBytes;
  if (max_records) n = std::min(n, max_records);
  RawImages out;
  out.pixels.resize(n * kCifarImageBytes);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = i * kCifarRecordBytes;
    const int label = bytes[off];
    if (label > 9) throw FormatError("CIFAR label " + std::to_string(label) + " out of range", off);
    out.labels[i] = label;
    for (std::size_t j = 0; j < kCifarImageBytes; ++j) out.pixels[i * kCifarImageBytes + j] = bytes[off + 1 + j];
  }
  return out;
}

RawImages read_cifar_file(const std::filesystem::path& file, std::size_t max_records) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw Error("dataset file missing: '" + file.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_cifar_binary(bytes, max_records);
}

RawImages generate_synthetic(const DatasetSpec& spec, std::size_t count, std::uint64_t stream) {
  const std::size_t S = spec.size, C = 3, K = spec.classes, modes = 2;
  const std::size_t plane = S * S;
  // Prototypes depend only on (seed, class), never on the split.
  std::vector<float> protos(K * modes * C * plane);
  for (std::size_t k = 0; k < K * modes; ++k) {
    std::mt19937_64 rng(derive_seed("synthetic-prototype", spec.seed * 1000003ull + k));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t c = 0; c < C; ++c) {
      float* p = protos.data() + (k * C + c) * plane;
      for (int wave = 0; wave < 3; ++wave) {
        const double fx = 0.5 + 2.0 * u(rng), fy = 0.5 + 2.0 * u(rng);
        const double phase = 2.0 * std::numbers::pi * u(rng);
        const double amp = 0.5 + u(rng);
        for (std::size_t y = 0; y < S; ++y)
          for (std::size_t x = 0; x < S; ++x)
            p[y * S + x] += static_cast<float>(
                amp * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) / static_cast<double>(S) + phase));
      }
    }
  }

  RawImages out;
  out.channels = C;
  out.height = out.width = S;
  out.pixels.assign(count * C * plane, 0.0f);
  out.labels.resize(count);
  std::mt19937_64 rng(derive_seed("synthetic-samples", spec.seed * 1000003ull + stream));
  std::uniform_int_distribution<std::size_t> pick_class(0, K - 1), pick_mode(0, modes - 1);
  std::uniform_int_distribution<int> shift(-2, 2);
  std::uniform_real_distribution<double> scale(0.6, 1.4), mix(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t label = i % K;  // balanced classes
    const std::size_t mode = pick_mode(rng);
    std::size_t other = pick_class(rng);
    if (other == label) other = (other + 1) % K;
    const std::size_t other_mode = pick_mode(rng);
    const int dx = shift(rng), dy = shift(rng);
    const double a = scale(rng), b = spec.distractor * mix(rng);
    out.labels[i] = static_cast<int>(label);
    for (std::size_t c = 0; c < C; ++c) {
      const float* p = protos.data() + ((label * modes + mode) * C + c) * plane;
      const float* q = protos.data() + ((other * modes + other_mode) * C + c) * plane;
      float* dst = out.pixels.data() + (i * C + c) * plane;
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
          const std::size_t sy = (y + S + dy) % S, sx = (x + S + dx) % S;
          dst[y * S + x] =
              static_cast<float>(a * p[sy * S + sx] + b * q[y * S + x] + spec.noise * noise(rng));
        }
    }
  }
  // Shuffle so class order is not periodic.
  std::vector<std::size_t> perm(count);
  for (std::size_t i = 0; i < count; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  RawImages shuffled = out;
  for (std::size_t i = 0; i < count; ++i) {
    shuffled.labels[i] = out.labels[perm[i]];
    std::copy_n(out.pixels.data() + perm[i] * C * plane, C * plane, shuffled.pixels.data() + i * C * plane);
  }
  return shuffled;
}

Dataset::Dataset(DatasetSpec spec, RawImages train, RawImages test)
    : spec_(std::move(spec)), train_(std::move(train)), test_(std::move(test)) {
  if (train_.size() == 0 || test_.size() == 0) throw ConfigError("dataset needs non-empty train and test splits");
  const std::size_t C = train_.channels, plane = train_.height * train_.width;
  mean_.assign(C, 0.0f);
  std_.assign(C, 0.0f);
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < train_.size(); ++i) {
      const float* p = train_.pixels.data() + (i * C + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) sum += p[j];
    }
    const double n = static_cast<double>(train_.size() * plane);
    const double mean = sum / n;
    for (std::size_t i = 0; i < train_.size(); ++i) {
      const float* p = train_.pixels.data() + (i * C + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) sq += (p[j] - mean) * (p[j] - mean);
    }
    mean_[c] = static_cast<float>(mean);
    std_[c] = static_cast<float>(std::sqrt(sq / n) + 1e-8);
  }
  for (RawImages* set : {&train_, &test_})
    for (std::size_t i = 0; i < set->size(); ++i)
      for (std::size_t c = 0; c < C; ++c) {
        float* p = set->pixels.data() + (i * C + c) * plane;
        for (std::size_t j = 0; j < plane; ++j) p[j] = (p[j] - mean_[c]) / std_[c];
      }
}

InputSpec Dataset::input_spec() const {
  return {train_.channels, train_.height, train_.width, spec_.kind == DatasetKind::Cifar10 ? 10 : spec_.classes};
}

Dataset::Batch Dataset::gather(const RawImages& src, std::span<const std::size_t> indices,
                               std::mt19937_64* rng) const {
  const std::size_t C = src.channels, H = src.height, W = src.width, plane = H * W;
  Batch b{Tensor({indices.size(), C, H, W}), std::vector<int>(indices.size())};
  const bool augment = rng && spec_.augment;
  std::uniform_int_distribution<int> offset(0, static_cast<int>(2 * spec_.pad));
  std::uniform_int_distribution<int> coin(0, 1);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t idx = indices[i];
    b.labels[i] = src.labels.at(idx);
    const float* img = src.pixels.data() + idx * C * plane;
    float* dst = b.images.ptr() + i * C * plane;
    if (!augment) {
      std::copy_n(img, C * plane, dst);
      continue;
    }
    // Crop window offset in the zero-padded image, then optional mirror.
    const int oy = offset(*rng) - static_cast<int>(spec_.pad);
    const int ox = offset(*rng) - static_cast<int>(spec_.pad);
    const bool flip = coin(*rng) == 1;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const int sy = static_cast<int>(y) + oy;
          const int sxr = static_cast<int>(flip ? W - 1 - x : x) + ox;
          const bool inside = sy >= 0 && sxr >= 0 && sy < static_cast<int>(H) && sxr < static_cast<int>(W);
          dst[c * plane + y * W + x] = inside ? img[c * plane + sy * W + sxr] : 0.0f;
        }
  }
  return b;
}

Dataset::Batch Dataset::train_batch(std::span<const std::size_t> indices, std::mt19937_64* rng) const {
  return gather(train_, indices, rng);
}

Dataset::Batch Dataset::test_batch(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
  return gather(test_, idx, nullptr);
}

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.kind == DatasetKind::Synthetic)
    return Dataset(spec, generate_synthetic(spec, spec.train, 0), generate_synthetic(spec, spec.test, 1));

  if (!std::filesystem::is_directory(spec.path))
    throw Error("dataset directory missing: '" + spec.path.string() + "'");
  RawImages train;
  for (int i = 1; i <= 5; ++i) {
    if (spec.train && train.size() >= spec.train) break;
    auto part = read_cifar_file(spec.path / ("data_batch_" + std::to_string(i) + ".bin"),
                                spec.train ? spec.train - train.size() : 0);
    train.pixels.insert(train.pixels.end(), part.pixels.begin(), part.pixels.end());
    train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
  }
  RawImages test = read_cifar_file(spec.path / "test_batch.bin", spec.test);
  return Dataset(spec, std::move(train), std::move(test));
}

}  // namespace prunebench
