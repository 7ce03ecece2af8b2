#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace prunebench {

// Lower-case hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

// 64-bit seed derived from a string and an integer, stable across platforms.
std::uint64_t derive_seed(std::string_view tag, std::uint64_t value);

}  // namespace prunebench
