#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace carenet {

// Self-contained SHA-256 used for artifact manifests.
std::string sha256_hex(const std::uint8_t* data, std::size_t len);
std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace carenet
