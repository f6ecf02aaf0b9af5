#pragma once

#include <filesystem>

#include "defectgen/core/grid.hpp"
#include "defectgen/core/mask.hpp"

namespace defectgen {

// 8-bit grayscale or RGB PNG -> Image with values k/255 in [0,1].
Image read_image_png(const std::filesystem::path& path);

// 1-channel -> gray8, 3-channel -> rgb8. Values are clamped to [0,1] and
// quantized with round(v * 255).
void write_image_png(const std::filesystem::path& path, const Image& img);

// 8-bit single-channel PNG; 255 -> 1, 0 -> 0, anything else is a format error.
Mask read_mask_png(const std::filesystem::path& path);

void write_mask_png(const std::filesystem::path& path, const Mask& mask);

}  // namespace defectgen
