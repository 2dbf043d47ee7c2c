#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace comer::codec {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws DataError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string floats_to_le_bytes(std::span<const float> values);
/// Throws DataError when the byte count is not a multiple of 4.
std::vector<float> le_bytes_to_floats(std::span<const std::uint8_t> bytes);

}  // namespace comer::codec
