#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "defectgen/bench/dataset.hpp"
#include "defectgen/blend/integrate.hpp"
#include "defectgen/diffusion/autoencoder.hpp"
#include "defectgen/diffusion/model.hpp"
#include "defectgen/diffusion/schedule.hpp"
#include "defectgen/diffusion/train.hpp"
#include "defectgen/eval/detector.hpp"
#include "defectgen/eval/metrics.hpp"
#include "defectgen/inversion/embedding_io.hpp"
#include "defectgen/run/config.hpp"

namespace defectgen::run {

// Named seed streams derived from a command's master seed.
namespace stream {
inline constexpr std::uint64_t kPretrainData = 11;
inline constexpr std::uint64_t kBackbone = 12;
inline constexpr std::uint64_t kAutoencoder = 13;
inline constexpr std::uint64_t kInversion = 14;
inline constexpr std::uint64_t kMask = 6;    // per-sample: (kMask << 32) | index
inline constexpr std::uint64_t kSample = 7;  // per-sample: (kSample << 32) | index
inline constexpr std::uint64_t kArmBase = 100;  // + arm index
}  // namespace stream

// A dataset manifest plus the directory its relative paths resolve against.
struct LoadedDataset {
  bench::DatasetManifest manifest;
  std::filesystem::path root;

  Image image(const bench::DatasetItem& item) const;
  Mask mask(const bench::DatasetItem& item) const;
};

LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

// Trained denoiser bundle shared by the downstream stages.
struct Backbone {
  diffusion::DenoiserModel<float> model;
  diffusion::NoiseSchedule sched;
  diffusion::Autoencoder<float> ae;
  std::vector<double> trace;
};

diffusion::UNetConfig unet_config_from(const Config& cfg, int in_channels);

// T_override < 0 keeps diffusion.T.
diffusion::NoiseSchedule schedule_from(const Config& cfg, int T_override = -1);

// Identity by default; in learned mode trains the compressor on the given
// images first.
diffusion::Autoencoder<float> autoencoder_from(const Config& cfg,
                                               const std::vector<Image>& images,
                                               std::uint64_t seed);

// Prompt-labels dataset items: defects get "a defect on <domain>", clean
// samples "a <domain>".
std::vector<diffusion::LabeledImage<float>> prompt_labeled(const LoadedDataset& ds);

Backbone train_backbone(const Config& cfg,
                        const std::vector<diffusion::LabeledImage<float>>& data,
                        const std::vector<Image>& ae_images, std::uint64_t seed,
                        int T_override = -1, int steps_override = -1);

inversion::ConceptEmbedding learn_embedding(const Config& cfg, Backbone& backbone,
                                            const LoadedDataset& ds,
                                            const std::string& domain,
                                            std::uint64_t seed,
                                            int steps_override = -1);

struct GeneratedSample {
  std::string id;
  Image image;  // integrated when generation.integrate is on
  Mask mask;
  PixelBox bbox;
  std::string background_id;
  std::uint64_t seed = 0;
  nlohmann::json provenance;
};

// Synthesizes `count` defects over the backgrounds round-robin, sampling a
// fresh procedural stroke mask per sample, then seamlessly integrating.
std::vector<GeneratedSample> generate_set(
    const Config& cfg, const Backbone& backbone,
    const inversion::ConceptEmbedding& embedding, const std::string& domain,
    const std::vector<std::pair<std::string, Image>>& backgrounds, int count,
    std::uint64_t seed);

blend::IntegrateOptions integrate_options_from(const Config& cfg);

// Writes images/, masks/ and samples.json under dir; returns the half-open
// ground-truth boxes of the written samples.
std::vector<eval::GroundTruth> write_generated(
    const std::filesystem::path& dir, const std::vector<GeneratedSample>& samples);

// --------------------------------------------------------------------------
// Scripted experiments

struct ArmResult {
  std::string arm;
  eval::EvalReport report;
};

struct ExperimentSeedResult {
  std::uint64_t seed = 0;
  std::vector<ArmResult> arms;
};

struct ExperimentResult {
  std::string preset;
  std::vector<std::string> arm_names;
  std::vector<ExperimentSeedResult> seeds;
  std::map<std::string, double> median_map;  // per arm, over seeds
};

// Runs every arm of the preset end-to-end for experiment.num_seeds derived
// seeds, writing per-seed reports, PR curves and the comparison table under
// out_dir. Arms share datasets and synthetic pools; detector parameters are
// per-arm (the zero-shot fine-tune arm alone initializes from source-arm
// weights).
ExperimentResult run_experiment(const Config& cfg, const std::string& preset,
                                std::uint64_t base_seed,
                                const std::filesystem::path& out_dir);

// Fixed-column comparison table (mAP@0.01, Best F1, Precision, Recall, F-1),
// medians across seeds.
std::string comparison_table(const ExperimentResult& r);
void save_comparison_csv(const ExperimentResult& r,
                         const std::filesystem::path& path);

// Half-open ground-truth box from an inclusive pixel box.
eval::Box to_eval_box(const PixelBox& b);

}  // namespace defectgen::run
