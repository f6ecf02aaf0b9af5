#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

namespace defectgen::run {

// Provenance record written by every command: resolved config, content
// fingerprints of all inputs and outputs, seeds and stage timings. Output
// hashes let a re-run with identical inputs be verified bit-for-bit.
struct RunManifest {
  std::string command;
  std::string run_id;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json inputs = nlohmann::json::object();
  nlohmann::json outputs = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();

  static RunManifest start(const std::string& command, std::uint64_t seed,
                           const nlohmann::json& config);

  // Fingerprints the file (FNV-1a over its bytes) under the given key.
  void note_input(const std::filesystem::path& p);
  void note_output(const std::filesystem::path& p);
  void note_seed(const std::string& name, std::uint64_t value);
  void note_timing(const std::string& stage, double seconds);

  void save(const std::filesystem::path& path) const;
};

// Scoped wall-clock timer feeding RunManifest::timings.
class StageTimer {
 public:
  StageTimer(RunManifest& m, std::string stage)
      : m_(m), stage_(std::move(stage)), t0_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const auto dt = std::chrono::steady_clock::now() - t0_;
    m_.note_timing(stage_, std::chrono::duration<double>(dt).count());
  }

 private:
  RunManifest& m_;
  std::string stage_;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace defectgen::run
