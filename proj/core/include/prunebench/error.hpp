#pragma once

#include <stdexcept>
#include <string>

namespace prunebench {

// Base class for every error raised by the library. The CLI maps these to
// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  ShapeError(std::string layer, const std::string& what)
      : Error("layer '" + layer + "': " + what), layer_(std::move(layer)) {}

  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NonFiniteLossError : public Error {
 public:
  explicit NonFiniteLossError(std::size_t batch_index)
      : Error("non-finite loss at batch " + std::to_string(batch_index)),
        batch_index_(batch_index) {}

  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (byte offset " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const noexcept { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

}  // namespace prunebench
