#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>

#include "defectgen/core/errors.hpp"

namespace defectgen {

// Binary defect-indicator mask: 1 = defect pixel, 0 = background.
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

inline long mask_count(const Mask& m) {
  return static_cast<long>(m.template cast<long>().sum());
}

inline bool mask_empty(const Mask& m) { return mask_count(m) == 0; }

inline void require_binary(const Mask& m) {
  if ((m > 1).any()) throw DataError("mask values must be 0 or 1");
}

// Chebyshev (square structuring element) dilation by `radius` pixels.
inline Mask dilate_mask(const Mask& m, int radius) {
  if (radius <= 0) return m;
  const Eigen::Index h = m.rows(), w = m.cols();
  Mask out = Mask::Zero(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      if (!m(y, x)) continue;
      const Eigen::Index y0 = std::max<Eigen::Index>(0, y - radius);
      const Eigen::Index y1 = std::min<Eigen::Index>(h - 1, y + radius);
      const Eigen::Index x0 = std::max<Eigen::Index>(0, x - radius);
      const Eigen::Index x1 = std::min<Eigen::Index>(w - 1, x + radius);
      out.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1).setConstant(1);
    }
  return out;
}

// Max-pool over f x f blocks: a low-resolution cell is 1 if any covered
// pixel is 1. Used to carry pixel masks to latent resolution.
inline Mask downsample_mask(const Mask& m, int f) {
  if (f < 1) throw ParamError("downsample factor must be >= 1");
  if (f == 1) return m;
  if (m.rows() % f != 0 || m.cols() % f != 0)
    throw ShapeError("mask dimensions not divisible by downsample factor");
  const Eigen::Index h = m.rows() / f, w = m.cols() / f;
  Mask out = Mask::Zero(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      out(y, x) = m.block(y * f, x * f, f, f).maxCoeff();
  return out;
}

// Inclusive tight bounding rectangle of the nonzero pixels.
struct PixelBox {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;
  bool operator==(const PixelBox&) const = default;
};

inline PixelBox derive_bbox(const Mask& m) {
  long x0 = m.cols(), y0 = m.rows(), x1 = -1, y1 = -1;
  for (Eigen::Index y = 0; y < m.rows(); ++y)
    for (Eigen::Index x = 0; x < m.cols(); ++x)
      if (m(y, x)) {
        x0 = std::min<long>(x0, x);
        y0 = std::min<long>(y0, y);
        x1 = std::max<long>(x1, x);
        y1 = std::max<long>(y1, y);
      }
  if (x1 < 0) throw ParamError("derive_bbox: empty mask");
  return PixelBox{static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(x1),
                  static_cast<int>(y1)};
}

}  // namespace defectgen
