#pragma once

#include "defectgen/blend/color.hpp"
#include "defectgen/blend/poisson.hpp"
#include "defectgen/core/grid.hpp"
#include "defectgen/core/mask.hpp"

namespace defectgen::blend {

enum class ColorMode { PerChannel, Luminance };

struct IntegrateOptions {
  int ring_width = 3;
  ColorMode color_mode = ColorMode::PerChannel;
  PoissonOptions poisson;
};

// Seamless-integration pipeline: moment-match the synthesized pixels to the
// ring statistics of the background, then gradient-blend the matched patch
// into the background. Returns the background unchanged (with a warning) when
// the mask is empty after the border shrink.
Image integrate(const Image& synthesized, const Mask& mask,
                const Image& background, const IntegrateOptions& opt = {},
                PoissonStats* stats = nullptr);

}  // namespace defectgen::blend
