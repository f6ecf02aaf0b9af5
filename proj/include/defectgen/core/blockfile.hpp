#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace defectgen {

// Single-file parameter container:
//   "DGC1" | u32 version | u32 manifest_len | manifest (UTF-8 JSON)
//   | per-block raw float32 little-endian data, in manifest["blocks"] order
//   | u32 CRC32 of all preceding bytes.
// The writer records {name, rows, cols} per block in the manifest.

inline constexpr char kBlockFileMagic[4] = {'D', 'G', 'C', '1'};
inline constexpr std::uint32_t kBlockFileVersion = 1;

struct NamedBlock {
  std::string name;
  long rows = 0;
  long cols = 0;
  std::vector<float> data;  // column-major, rows*cols values
};

void write_block_file(const std::filesystem::path& path,
                      nlohmann::json manifest,
                      const std::vector<NamedBlock>& blocks);

struct BlockFile {
  nlohmann::json manifest;
  std::vector<NamedBlock> blocks;

  const NamedBlock& find(const std::string& name) const;
};

BlockFile read_block_file(const std::filesystem::path& path);

}  // namespace defectgen
