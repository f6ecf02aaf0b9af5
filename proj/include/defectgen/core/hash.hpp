#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

namespace defectgen {

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t fnv1a64_file(const std::filesystem::path& path);

std::string hex64(std::uint64_t v);

// CRC32 (zlib polynomial) of a byte range, as used by the binary file formats.
std::uint32_t crc32_bytes(const void* data, std::size_t n, std::uint32_t seed = 0);

}  // namespace defectgen
