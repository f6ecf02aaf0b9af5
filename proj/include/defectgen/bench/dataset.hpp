#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "defectgen/bench/synth.hpp"
#include "defectgen/core/mask.hpp"

namespace defectgen::bench {

// Roles a sample can play in the experiment presets.
inline constexpr const char* kRoleReference = "reference";
inline constexpr const char* kRoleBackground = "background";
inline constexpr const char* kRoleTest = "test";
inline constexpr const char* kRoleSourceTrain = "source_train";
inline constexpr const char* kRolePretrain = "pretrain";

struct DatasetItem {
  std::string id;
  std::string role;
  std::string domain;
  std::uint64_t seed = 0;  // fully determines the sample
  bool defect = false;
  std::string image_path;  // relative to the manifest directory
  std::string mask_path;   // empty for clean samples
  PixelBox bbox{0, 0, 0, 0};
};

struct DatasetManifest {
  std::string preset;
  std::uint64_t seed = 0;
  int rows = 64;
  int cols = 64;
  std::vector<DatasetItem> items;

  std::vector<const DatasetItem*> with_role(const std::string& role) const {
    std::vector<const DatasetItem*> v;
    for (const auto& it : items)
      if (it.role == role) v.push_back(&it);
    return v;
  }
};

struct DatasetOptions {
  int rows = 64;
  int cols = 64;
  int references = -1;   // -1 = preset default
  int backgrounds = -1;
  int test = -1;
  int source_train = -1;
  int pretrain_per_bucket = -1;  // pretrain preset: items per (domain x defect)
};

// Regenerates a sample purely from its manifest entry (no file access).
LabeledSample materialize_item(const DatasetItem& item, int rows, int cols);

// Builds a preset dataset under out_dir (images/, masks/, manifest.json).
// Presets: "few_shot" (4 reference B + 20 clean B + 129 test B), "zero_shot"
// (4 reference A + 150 train A + 20 clean B + 133 test B), "pretrain"
// (a clean+defect corpus over both domains for backbone training).
DatasetManifest build_dataset(const std::string& preset, std::uint64_t seed,
                              const std::filesystem::path& out_dir,
                              const DatasetOptions& opt = {});

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace defectgen::bench
