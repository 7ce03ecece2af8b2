#include "prunebench/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "prunebench/error.hpp"

namespace prunebench {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated checkpoint while reading ") + what, pos_);
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_tensors(const TensorMap& tensors) {
  std::string out(kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    const auto* raw = reinterpret_cast<const char*>(t.ptr());
    out.append(raw, t.numel() * sizeof(float));
  }
  return out;
}

TensorMap deserialize_tensors(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kCheckpointMagic.size(), "magic") != kCheckpointMagic) throw FormatError("bad checkpoint magic", 0);
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), kCheckpointMagic.size());
  TensorMap out;
  while (!r.done()) {
    const std::size_t record_start = r.pos();
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name(r.take(name_len, "name"));
    const auto rank = r.get<std::uint32_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) {
      d = static_cast<std::size_t>(r.get<std::uint64_t>("shape"));
      if (d == 0) throw FormatError("zero dimension in tensor '" + name + "'", record_start);
    }
    const std::size_t n = shape_numel(shape);
    auto raw = r.take(n * sizeof(float), "tensor data");
    std::vector<float> data(n);
    std::memcpy(data.data(), raw.data(), raw.size());
    if (!out.emplace(name, Tensor(std::move(shape), std::move(data))).second)
      throw FormatError("duplicate tensor '" + name + "'", record_start);
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors) {
  const std::string bytes = serialize_tensors(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

TensorMap load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_tensors(ss.str());
}

}  // namespace prunebench
