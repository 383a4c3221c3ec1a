#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sparkprop {

using Bytes = std::vector<std::uint8_t>;

Bytes read_file(const std::filesystem::path& path);
/// Writes through a temporary file in the same directory and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_string(std::span<const std::uint8_t> b) { return std::string(b.begin(), b.end()); }

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::span<const std::uint8_t> bytes);

}  // namespace sparkprop
