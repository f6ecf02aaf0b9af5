#include "defectgen/bench/synth.hpp"

#include <algorithm>
#include <cmath>

#include "defectgen/core/errors.hpp"

namespace defectgen::bench {

namespace {

float quantize(double v) {
  v = std::min(1.0, std::max(0.0, v));
  return static_cast<float>(std::lround(v * 255.0)) / 255.0f;
}

int to_u8(float v) { return static_cast<int>(std::lround(v * 255.0f)); }

double point_segment_distance(double px, double py, double ax, double ay,
                              double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double wx = px - ax, wy = py - ay;
  const double vv = vx * vx + vy * vy;
  double t = vv > 0 ? (wx * vx + wy * vy) / vv : 0.0;
  t = std::min(1.0, std::max(0.0, t));
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

Image synth_background(const TextureSpec& spec) {
  if (spec.rows < 8 || spec.cols < 8)
    throw ParamError("texture size must be at least 8x8");
  Image img(spec.rows, spec.cols, 1);
  auto& p = img.plane(0);
  if (spec.domain == kDomainA) {
    // Light surface with low-contrast diagonal stripes.
    const double theta = 0.3 + 0.9 * hash_uniform(spec.seed, 101);
    const double period = 8.0 + 8.0 * hash_uniform(spec.seed, 102);
    const double phase = 6.28318530718 * hash_uniform(spec.seed, 103);
    const double cx = std::cos(theta), sy = std::sin(theta);
    for (int y = 0; y < spec.rows; ++y)
      for (int x = 0; x < spec.cols; ++x) {
        const double stripe =
            0.5 + 0.5 * std::sin(6.28318530718 * (x * cx + y * sy) / period + phase);
        const double n = hash_uniform(spec.seed, static_cast<std::uint64_t>(x),
                                      static_cast<std::uint64_t>(y), 1);
        p(y, x) = quantize(0.72 + 0.08 * stripe + 0.04 * (n - 0.5));
      }
  } else if (spec.domain == kDomainB) {
    // Dark surface with two-scale granular noise plus the occasional benign
    // grain streak. The streaks are part of the clean surface: they are never
    // annotated, and they sit just below the defect contrast range so that a
    // detector has to learn the boundary instead of firing on any anomaly.
    Eigen::ArrayXXd vals(spec.rows, spec.cols);
    for (int y = 0; y < spec.rows; ++y)
      for (int x = 0; x < spec.cols; ++x) {
        const double coarse =
            hash_uniform(spec.seed, static_cast<std::uint64_t>(x / 3),
                         static_cast<std::uint64_t>(y / 3), 2);
        const double fine = hash_uniform(spec.seed, static_cast<std::uint64_t>(x),
                                         static_cast<std::uint64_t>(y), 3);
        vals(y, x) = 0.35 + 0.10 * (0.6 * coarse + 0.4 * fine - 0.5);
      }
    const int streaks = std::min(
        2, static_cast<int>(3.0 * hash_uniform(spec.seed, 9001)));
    for (int i = 0; i < streaks; ++i) {
      const std::uint64_t s0 = 9010 + 16 * static_cast<std::uint64_t>(i);
      const double ax = 1.0 + hash_uniform(spec.seed, s0) * (spec.cols - 3);
      const double ay = 1.0 + hash_uniform(spec.seed, s0 + 1) * (spec.rows - 3);
      const double ang = hash_uniform(spec.seed, s0 + 2) * 6.28318530718;
      const double len = 6.0 + 8.0 * hash_uniform(spec.seed, s0 + 3);
      const double bx = std::min(spec.cols - 2.0,
                                 std::max(1.0, ax + len * std::cos(ang)));
      const double by = std::min(spec.rows - 2.0,
                                 std::max(1.0, ay + len * std::sin(ang)));
      const double width = 0.8 + 0.5 * hash_uniform(spec.seed, s0 + 4);
      const double mag = 0.045 + 0.035 * hash_uniform(spec.seed, s0 + 5);
      const double off = hash_uniform(spec.seed, s0 + 6) < 0.7 ? -mag : mag;
      const double reach = width / 2.0 + 1.0;
      const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - reach)));
      const int x1 = std::min(spec.cols - 1,
                              static_cast<int>(std::ceil(std::max(ax, bx) + reach)));
      const int y0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - reach)));
      const int y1 = std::min(spec.rows - 1,
                              static_cast<int>(std::ceil(std::max(ay, by) + reach)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double d = point_segment_distance(x, y, ax, ay, bx, by);
          const double cover = std::min(1.0, std::max(0.0, width / 2.0 + 0.5 - d));
          if (cover > 0.0) vals(y, x) += off * cover;
        }
    }
    for (int y = 0; y < spec.rows; ++y)
      for (int x = 0; x < spec.cols; ++x) p(y, x) = quantize(vals(y, x));
  } else {
    throw ParamError("unknown texture domain: " + spec.domain);
  }
  return img;
}

LabeledSample synth_scratch(const Image& background, const DefectStroke& stroke,
                            const std::string& domain) {
  if (background.channels() != 1)
    throw ShapeError("scratch rendering expects a single-channel background");
  if (stroke.points.size() < 2)
    throw ParamError("stroke needs at least two control points");
  if (stroke.width < 1.0 || stroke.width > 3.0)
    throw ParamError("stroke width must be in [1,3] pixels");
  const auto rows = background.rows(), cols = background.cols();
  for (const auto& pt : stroke.points)
    if (pt[0] < 0 || pt[0] > static_cast<double>(cols - 1) || pt[1] < 0 ||
        pt[1] > static_cast<double>(rows - 1))
      throw ParamError("stroke control point outside image bounds");

  LabeledSample s;
  s.image = background;
  s.mask = Mask::Zero(rows, cols);
  s.domain = domain;
  auto& out = s.image.plane(0);
  const auto& bg = background.plane(0);

  const double reach = stroke.width / 2.0 + 1.0;
  for (std::size_t k = 0; k + 1 < stroke.points.size(); ++k) {
    const auto& a = stroke.points[k];
    const auto& b = stroke.points[k + 1];
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a[0], b[0]) - reach)));
    const int x1 = std::min(static_cast<int>(cols) - 1,
                            static_cast<int>(std::ceil(std::max(a[0], b[0]) + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a[1], b[1]) - reach)));
    const int y1 = std::min(static_cast<int>(rows) - 1,
                            static_cast<int>(std::ceil(std::max(a[1], b[1]) + reach)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double d =
            point_segment_distance(x, y, a[0], a[1], b[0], b[1]);
        const double cover =
            std::min(1.0, std::max(0.0, stroke.width / 2.0 + 0.5 - d));
        if (cover <= 0.0) continue;
        // Coverage accumulates via min-distance semantics: keep the strongest
        // offset seen at this pixel across segments.
        const float candidate =
            quantize(static_cast<double>(bg(y, x)) + stroke.intensity * cover);
        const float applied = out(y, x);
        const bool stronger = stroke.intensity < 0 ? candidate < applied
                                                   : candidate > applied;
        if (s.mask(y, x) == 0 || stronger) {
          if (std::abs(to_u8(candidate) - to_u8(bg(y, x))) >= 2) {
            out(y, x) = candidate;
            s.mask(y, x) = 1;
          }
        }
      }
  }

  if (mask_count(s.mask) == 0) throw DataError("degenerate defect");
  s.defect = true;
  s.bbox = derive_bbox(s.mask);
  return s;
}

DefectStroke sample_stroke(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  DefectStroke st;
  st.seed = seed;
  const double margin = 4.0;
  const int npts = static_cast<int>(rng.uniform_int(2, 4));
  double x = margin + rng.uniform() * (cols - 1 - 2 * margin);
  double y = margin + rng.uniform() * (rows - 1 - 2 * margin);
  double dir = rng.uniform() * 6.28318530718;
  st.points.push_back({x, y});
  for (int i = 1; i < npts; ++i) {
    const double len = 8.0 + rng.uniform() * 16.0;
    dir += (rng.uniform() - 0.5) * 1.2;  // gentle bends only
    x = std::min(static_cast<double>(cols - 1) - margin,
                 std::max(margin, x + len * std::cos(dir)));
    y = std::min(static_cast<double>(rows - 1) - margin,
                 std::max(margin, y + len * std::sin(dir)));
    st.points.push_back({x, y});
  }
  st.width = 1.0 + rng.uniform() * 1.2;  // [1,2.2): stays thin even with the AA halo
  // Dark scratches with a faint-heavy contrast spread: many instances sit just
  // above the benign grain streaks of the surface, so a handful of references
  // cannot cover the appearance family and training diversity matters.
  const double u = rng.uniform();
  st.intensity = -(0.10 + 0.25 * u * u);
  return st;
}

}  // namespace defectgen::bench
