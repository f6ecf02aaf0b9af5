#include "defectgen/core/hash.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <vector>

#include "defectgen/core/errors.hpp"

namespace defectgen {

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for fingerprinting: " + path.string());
  std::uint64_t h = 0xCBF29CE484222325ull;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = fnv1a64(buf.data(), static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

std::uint32_t crc32_bytes(const void* data, std::size_t n, std::uint32_t seed) {
  return static_cast<std::uint32_t>(
      ::crc32(seed, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace defectgen
