#include "defectgen/blend/integrate.hpp"

#include <cmath>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/log.hpp"

namespace defectgen::blend {

namespace {

Image luminance_plane(const Image& img) {
  Image y(img.rows(), img.cols(), 1);
  if (img.channels() == 1) {
    y.plane(0) = img.plane(0);
  } else if (img.channels() == 3) {
    y.plane(0) = 0.299f * img.plane(0) + 0.587f * img.plane(1) +
                 0.114f * img.plane(2);
  } else {
    throw ShapeError("luminance mode expects 1 or 3 channels");
  }
  return y;
}

}  // namespace

Image integrate(const Image& synthesized, const Mask& mask,
                const Image& background, const IntegrateOptions& opt,
                PoissonStats* stats) {
  require_same_shape(synthesized, background, "integrate");
  if (mask.rows() != background.rows() || mask.cols() != background.cols())
    throw ShapeError("integrate: mask shape mismatch");
  require_binary(mask);

  Mask working = mask;
  const bool shrunk = shrink_mask_from_border(working);
  if (shrunk) log_warn("integrate: mask touched the border; shrunk by 1 px");
  if (mask_count(working) == 0) {
    log_warn("integrate: mask empty after border shrink; returning background");
    if (stats) stats->border_shrunk = shrunk;
    return background;
  }

  Image matched;
  if (opt.color_mode == ColorMode::PerChannel) {
    const ColorStats dst = ring_stats(background, working, opt.ring_width);
    const ColorStats src = pixel_stats(synthesized, working);
    matched = match_color_lighting(synthesized, working, src, dst);
  } else {
    const Image luma_bg = luminance_plane(background);
    const Image luma_syn = luminance_plane(synthesized);
    const ColorStats dst = ring_stats(luma_bg, working, opt.ring_width);
    const ColorStats src = pixel_stats(luma_syn, working);
    matched = synthesized;
    for (Eigen::Index y = 0; y < mask.rows(); ++y)
      for (Eigen::Index x = 0; x < mask.cols(); ++x)
        if (working(y, x)) {
          const double l = luma_syn.plane(0)(y, x);
          const double delta =
              match_value(l, src.mean(0), src.stddev(0), dst.mean(0),
                          dst.stddev(0)) -
              l;
          for (int c = 0; c < matched.channels(); ++c) {
            const double v = matched.plane(c)(y, x) + delta;
            matched.plane(c)(y, x) =
                static_cast<float>(std::min(1.0, std::max(0.0, v)));
          }
        }
  }

  Image out = poisson_blend(matched, background, working, opt.poisson, stats);
  if (stats) stats->border_shrunk = stats->border_shrunk || shrunk;
  return out;
}

}  // namespace defectgen::blend
