#include "defectgen/run/manifest.hpp"

#include <fstream>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/hash.hpp"
#include "defectgen/core/rng.hpp"

namespace defectgen::run {

RunManifest RunManifest::start(const std::string& command, std::uint64_t seed,
                               const nlohmann::json& config) {
  RunManifest m;
  m.command = command;
  m.seed = seed;
  m.config = config;
  m.run_id = command + "-" + hex64(derive_seed(seed, fnv1a64(command)));
  return m;
}

void RunManifest::note_input(const std::filesystem::path& p) {
  inputs[p.string()] = hex64(fnv1a64_file(p));
}

void RunManifest::note_output(const std::filesystem::path& p) {
  outputs[p.string()] = hex64(fnv1a64_file(p));
}

void RunManifest::note_seed(const std::string& name, std::uint64_t value) {
  seeds[name] = value;
}

void RunManifest::note_timing(const std::string& stage, double seconds) {
  timings[stage] = seconds;
}

void RunManifest::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["run_id"] = run_id;
  j["command"] = command;
  j["seed"] = seed;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["seeds"] = seeds;
  j["timings"] = timings;
  if (!extra.empty()) j["extra"] = extra;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write run manifest: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace defectgen::run
