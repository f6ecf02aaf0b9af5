#pragma once

#include <Eigen/Core>
#include <cmath>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/grid.hpp"
#include "defectgen/core/log.hpp"
#include "defectgen/core/mask.hpp"

namespace defectgen::blend {

// Per-channel first and second moments over a pixel selection (population
// standard deviation).
struct ColorStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

inline constexpr double kSigmaFloor = 1e-4;

inline ColorStats pixel_stats(const Image& img, const Mask& sel) {
  if (sel.rows() != img.rows() || sel.cols() != img.cols())
    throw ShapeError("pixel_stats: selection shape mismatch");
  const long n = mask_count(sel);
  if (n == 0) throw DataError("pixel_stats: empty selection");
  ColorStats cs;
  cs.mean.resize(img.channels());
  cs.stddev.resize(img.channels());
  const auto mf = sel.cast<double>();
  for (int c = 0; c < img.channels(); ++c) {
    const auto p = img.plane(c).cast<double>();
    const double s1 = (mf * p).sum();
    const double s2 = (mf * p.square()).sum();
    const double mu = s1 / static_cast<double>(n);
    cs.mean(c) = mu;
    cs.stddev(c) = std::sqrt(std::max(0.0, s2 / static_cast<double>(n) - mu * mu));
  }
  return cs;
}

inline ColorStats whole_image_stats(const Image& img) {
  return pixel_stats(img, Mask::Constant(img.rows(), img.cols(), 1));
}

// Stats over the ring dilate(mask, ring_width) \ mask. An empty ring (mask
// floods the dilation, or ring_width = 0) falls back to whole-image stats
// with a warning.
inline ColorStats ring_stats(const Image& img, const Mask& mask, int ring_width) {
  if (mask.rows() != img.rows() || mask.cols() != img.cols())
    throw ShapeError("ring_stats: mask shape mismatch");
  Mask ring = Mask::Zero(mask.rows(), mask.cols());
  if (ring_width > 0) {
    const Mask dil = dilate_mask(mask, ring_width);
    for (Eigen::Index y = 0; y < mask.rows(); ++y)
      for (Eigen::Index x = 0; x < mask.cols(); ++x)
        ring(y, x) = (dil(y, x) && !mask(y, x)) ? 1 : 0;
  }
  if (mask_count(ring) == 0) {
    log_warn("ring_stats: empty ring, falling back to whole-image statistics");
    return whole_image_stats(img);
  }
  return pixel_stats(img, ring);
}

// out = (x - mu_src) / max(sigma_src, floor) * sigma_dst + mu_dst, clamped.
inline double match_value(double x, double mu_src, double sd_src, double mu_dst,
                          double sd_dst) {
  const double y = (x - mu_src) / std::max(sd_src, kSigmaFloor) * sd_dst + mu_dst;
  return std::min(1.0, std::max(0.0, y));
}

// Applies the moment-matching transform to pixels under the mask; all other
// pixels pass through unchanged.
inline Image match_color_lighting(const Image& img, const Mask& mask,
                                  const ColorStats& src, const ColorStats& dst) {
  if (mask.rows() != img.rows() || mask.cols() != img.cols())
    throw ShapeError("match_color_lighting: mask shape mismatch");
  if (src.mean.size() != img.channels() || dst.mean.size() != img.channels())
    throw ShapeError("match_color_lighting: stats channel mismatch");
  for (int c = 0; c < img.channels(); ++c)
    if (!std::isfinite(src.mean(c)) || !std::isfinite(src.stddev(c)) ||
        !std::isfinite(dst.mean(c)) || !std::isfinite(dst.stddev(c)))
      throw ParamError("match_color_lighting: non-finite statistics");
  Image out = img;
  for (int c = 0; c < img.channels(); ++c)
    for (Eigen::Index y = 0; y < img.rows(); ++y)
      for (Eigen::Index x = 0; x < img.cols(); ++x)
        if (mask(y, x))
          out.plane(c)(y, x) = static_cast<float>(
              match_value(img.plane(c)(y, x), src.mean(c), src.stddev(c),
                          dst.mean(c), dst.stddev(c)));
  return out;
}

}  // namespace defectgen::blend
