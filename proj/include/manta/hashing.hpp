#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace manta {

/// Hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

/// First 16 hex digits of the SHA-256, used as a short content tag.
std::string content_hash(std::string_view bytes);

std::string file_content_hash(const std::filesystem::path& path);

}  // namespace manta
