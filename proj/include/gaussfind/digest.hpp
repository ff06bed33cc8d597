#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace gaussfind {

/// Lower-case hex SHA-256 of the concatenated parts.
std::string sha256_hex(std::span<const std::span<const std::uint8_t>> parts);
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);

/// Hex string of `bytes` bytes from the system CSPRNG.
std::string random_token(std::size_t bytes = 16);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace gaussfind
