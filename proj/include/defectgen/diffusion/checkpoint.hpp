#pragma once

#include <filesystem>

#include "json.hpp"

#include "defectgen/diffusion/autoencoder.hpp"
#include "defectgen/diffusion/model.hpp"
#include "defectgen/diffusion/schedule.hpp"

namespace defectgen::diffusion {

// Persists the denoiser (all parameters), its vocabulary, the noise schedule
// and the autoencoder in one block file; `info` carries free-form provenance
// (training seed, dataset fingerprint, step count).
void save_checkpoint(const std::filesystem::path& path,
                     DenoiserModel<float>& model, const NoiseSchedule& sched,
                     const nlohmann::json& info = nlohmann::json::object(),
                     const Autoencoder<float>* ae = nullptr);

struct LoadedCheckpoint {
  DenoiserModel<float> model;
  NoiseSchedule sched;
  Autoencoder<float> ae;  // identity unless the file carries a learned one
  nlohmann::json info;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace defectgen::diffusion
