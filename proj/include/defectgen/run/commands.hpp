#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "defectgen/run/config.hpp"

namespace defectgen::run {

// Flags shared by every subcommand.
struct CommonOptions {
  std::optional<std::filesystem::path> config_file;
  std::vector<std::string> overrides;  // --set key.path=value
  std::uint64_t seed = 0;
  std::filesystem::path out;
  std::optional<std::filesystem::path> manifest_path;

  Config resolve_config() const { return Config::resolve(config_file, overrides); }
};

void cmd_synth_data(const CommonOptions& common, const std::string& preset);
void cmd_train(const CommonOptions& common,
               const std::filesystem::path& dataset_manifest);
void cmd_learn(const CommonOptions& common,
               const std::filesystem::path& checkpoint,
               const std::filesystem::path& refs_dir);
void cmd_generate(const CommonOptions& common,
                  const std::filesystem::path& checkpoint,
                  const std::filesystem::path& embedding,
                  const std::filesystem::path& backgrounds, int count);
void cmd_blend(const CommonOptions& common, const std::filesystem::path& source,
               const std::filesystem::path& mask,
               const std::filesystem::path& target);
void cmd_eval(const CommonOptions& common,
              const std::filesystem::path& detections,
              const std::filesystem::path& annotations);
void cmd_experiment(const CommonOptions& common, const std::string& preset);

}  // namespace defectgen::run
