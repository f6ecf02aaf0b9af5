#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "defectgen/core/grid.hpp"
#include "defectgen/core/mask.hpp"
#include "defectgen/core/rng.hpp"

namespace defectgen::bench {

inline constexpr const char* kDomainA = "surface-A";  // light, striped
inline constexpr const char* kDomainB = "surface-B";  // dark, granular

struct TextureSpec {
  std::string domain = kDomainB;
  int rows = 64;
  int cols = 64;
  std::uint64_t seed = 0;
};

// Deterministic grayscale texture, quantized to k/255 so PNG round-trips are
// bitwise exact. Domain A is a light striped surface (mean ~0.76), domain B a
// dark granular one (mean ~0.35).
Image synth_background(const TextureSpec& spec);

struct DefectStroke {
  std::vector<std::array<double, 2>> points;  // (x, y) control polyline
  double width = 1.5;                         // pixels, in [1,3]
  double intensity = -0.25;                   // signed value offset
  std::uint64_t seed = 0;
};

struct LabeledSample {
  Image image;
  Mask mask;
  PixelBox bbox;  // tight inclusive box (defect samples only)
  std::string domain;
  bool defect = false;
};

// Renders an anti-aliased thin polyline onto the background, offsetting the
// surface value by `intensity` scaled with pixel coverage. The image is
// re-quantized to k/255 and the mask is exactly the set of changed pixels
// (sub-quantum fringes are snapped back to the background, so mask and image
// agree bitwise). Throws "degenerate defect" when nothing changes.
LabeledSample synth_scratch(const Image& background, const DefectStroke& stroke,
                            const std::string& domain = "");

// Draws a random thin scratch fully inside the frame.
DefectStroke sample_stroke(int rows, int cols, std::uint64_t seed);

}  // namespace defectgen::bench
