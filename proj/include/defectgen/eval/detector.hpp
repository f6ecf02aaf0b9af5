#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "defectgen/core/grid.hpp"
#include "defectgen/core/mask.hpp"
#include "defectgen/core/rng.hpp"
#include "defectgen/eval/metrics.hpp"
#include "defectgen/nn/layers.hpp"

namespace defectgen::eval {

struct DetectorConfig {
  int window = 16;        // square sliding window side
  int stride = 4;         // window step in pixels
  double emit_floor = 0.05;  // windows below this confidence are dropped
  int train_steps = 1500;
  double lr = 1e-3;
  int jitter = 3;         // positive-crop center jitter (+/- pixels)
};

// One training sample; an all-zero (or 0x0) mask marks a defect-free image.
struct DetectorTrainItem {
  Image image;
  Mask mask;
};

// Small convolutional window scorer. A default-constructed detector is
// uncalibrated: scoring and saving throw until it is trained or loaded.
class Detector {
 public:
  Detector() = default;
  static Detector create(const DetectorConfig& cfg, Rng& rng);

  bool calibrated() const { return calibrated_; }
  const DetectorConfig& config() const { return cfg_; }

  // Sigmoid confidence of the window with top-left corner (x0, y0).
  double score_window(const Image& image, int x0, int y0) const;

  // Slides the window over the image, groups overlapping positives into
  // one detection each (union box, max confidence).
  std::vector<Detection> detect(const Image& image,
                                const std::string& image_id) const;

  // One Adam-ready gradient accumulation on a window crop; returns BCE loss.
  double train_crop(const Image& image, int x0, int y0, float label);

  std::vector<nn::ParamView<float>> params();
  void zero_grads();

  void save(const std::filesystem::path& path) const;
  static Detector load(const std::filesystem::path& path);

 private:
  Mat<float> crop(const Image& image, int x0, int y0) const;
  double logit(const Mat<float>& x) const;

  DetectorConfig cfg_;
  bool calibrated_ = false;
  nn::Conv2d<float> conv1_, conv2_;
  nn::Dense<float> fc1_, fc2_;

  friend struct DetectorTrainer;
};

struct DetectorTrainResult {
  Detector detector;
  std::vector<double> loss_trace;
};

// Trains a fresh detector on mask-centered positive crops (with jitter)
// against defect-free negatives plus zero-overlap crops from defect images.
DetectorTrainResult train_detector(const std::vector<DetectorTrainItem>& items,
                                   const DetectorConfig& cfg,
                                   std::uint64_t seed);

// Continues training from an already calibrated detector (fine-tuning).
DetectorTrainResult finetune_detector(const Detector& init,
                                      const std::vector<DetectorTrainItem>& items,
                                      int steps, std::uint64_t seed);

}  // namespace defectgen::eval
