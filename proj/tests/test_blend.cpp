#include "doctest.h"

#include <cmath>

#include "defectgen/bench/synth.hpp"
#include "defectgen/blend/integrate.hpp"
#include "defectgen/core/rng.hpp"
#include "oracles.hpp"

using namespace defectgen;
using namespace defectgen::blend;

namespace {

Image constant_image(int rows, int cols, float v) {
  return Image::constant(rows, cols, 1, v);
}

Mask center_mask(int rows, int cols, int border) {
  Mask m = Mask::Zero(rows, cols);
  for (Eigen::Index y = border; y < rows - border; ++y)
    for (Eigen::Index x = border; x < cols - border; ++x) m(y, x) = 1;
  return m;
}

}  // namespace

TEST_SUITE("blend") {

TEST_CASE("ring statistics cover exactly the dilation minus the mask") {
  const Image img = constant_image(7, 7, 0.5f);
  Mask m = Mask::Zero(7, 7);
  m(3, 3) = 1;
  const ColorStats cs = ring_stats(img, m, 1);
  CHECK(cs.mean(0) == doctest::Approx(0.5));
  CHECK(cs.stddev(0) == doctest::Approx(0.0));

  // 1x3 strip: mask in the middle, ring = the two ends with values 0 and 1.
  Image strip(1, 3, 1);
  strip.plane(0) << 0.0f, 0.25f, 1.0f;
  Mask mid = Mask::Zero(1, 3);
  mid(0, 1) = 1;
  const ColorStats two = ring_stats(strip, mid, 1);
  CHECK(two.mean(0) == doctest::Approx(0.5));
  CHECK(two.stddev(0) == doctest::Approx(0.5));

  // Width 0 and flooded masks fall back to whole-image statistics.
  const ColorStats whole = whole_image_stats(strip);
  const ColorStats fb0 = ring_stats(strip, mid, 0);
  CHECK(fb0.mean(0) == doctest::Approx(whole.mean(0)));
  const ColorStats fb1 = ring_stats(strip, Mask::Ones(1, 3), 2);
  CHECK(fb1.mean(0) == doctest::Approx(whole.mean(0)));

  CHECK_THROWS_AS(pixel_stats(img, Mask::Zero(7, 7)), DataError);
  CHECK_THROWS_AS(ring_stats(img, Mask::Zero(5, 5), 1), ShapeError);
}

TEST_CASE("moment matching follows its closed form") {
  CHECK(match_value(0.3, 0.3, 0.1, 0.3, 0.1) == doctest::Approx(0.3));
  // (0.6 - 0.5)/0.2 * 0.1 + 0.2 = 0.25
  CHECK(match_value(0.6, 0.5, 0.2, 0.2, 0.1) == doctest::Approx(0.25));
  // Zero source spread: every x collapses to the destination mean.
  CHECK(match_value(0.9, 0.4, 0.0, 0.7, 0.1) ==
        doctest::Approx(0.7).epsilon(1e-2));
  CHECK(match_value(5.0, 0.0, 1.0, 0.0, 1.0) == 1.0);  // clamped

  Image img = constant_image(2, 2, 0.6f);
  Mask m = Mask::Zero(2, 2);
  m(0, 0) = 1;
  ColorStats src{Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, 0.2)};
  ColorStats dst{Eigen::VectorXd::Constant(1, 0.2), Eigen::VectorXd::Constant(1, 0.1)};
  const Image out = match_color_lighting(img, m, src, dst);
  CHECK(out.plane(0)(0, 0) == doctest::Approx(0.25));
  CHECK(out.plane(0)(1, 1) == 0.6f);

  ColorStats bad = src;
  bad.mean(0) = std::nan("");
  CHECK_THROWS_AS(match_color_lighting(img, m, bad, dst), ParamError);
}

TEST_CASE("border mask pixels are shrunk away before solving") {
  Mask m = Mask::Ones(4, 4);
  CHECK(shrink_mask_from_border(m));
  CHECK(mask_count(m) == 4);  // only the 2x2 core survives
  CHECK(m(1, 1) == 1);
  CHECK(m(0, 0) == 0);

  Mask inner = center_mask(5, 5, 1);
  Mask copy = inner;
  CHECK_FALSE(shrink_mask_from_border(copy));
  CHECK((copy == inner).all());
}

TEST_CASE("gradient blending reproduces hand-solved cases") {
  // Identical source and target: nothing changes.
  bench::TextureSpec spec;
  spec.rows = spec.cols = 9;
  spec.seed = 5;
  const Image tex = bench::synth_background(spec);
  PoissonStats st;
  const Image same = poisson_blend(tex, tex, center_mask(9, 9, 2), {}, &st);
  CHECK(linf_diff(same, tex) <= 1e-6);
  CHECK(st.interior == 25);

  // Constant source over constant target: boundary wins, result constant.
  const Image src = constant_image(5, 5, 0.9f);
  const Image dst = constant_image(5, 5, 0.2f);
  Mask m = Mask::Zero(5, 5);
  m(2, 2) = 1;
  const Image flat = poisson_blend(src, dst, m);
  CHECK(flat.plane(0)(2, 2) == doctest::Approx(0.2).epsilon(1e-6));

  // 3x3 with a single interior pixel: 4f = sum of source-gradient terms +
  // boundary targets. Source all 0.75 (zero gradients), target border 1.0
  // -> f = (0.25 * 4 * 1.0) = 1.0.
  const Image s3 = constant_image(3, 3, 0.75f);
  const Image t3 = constant_image(3, 3, 1.0f);
  Mask m3 = Mask::Zero(3, 3);
  m3(1, 1) = 1;
  const Image one = poisson_blend(s3, t3, m3);
  CHECK(one.plane(0)(1, 1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("pixels outside the mask keep their target values bitwise") {
  bench::TextureSpec a, b;
  a.rows = a.cols = b.rows = b.cols = 10;
  a.seed = 31;
  b.seed = 32;
  b.domain = "surface-A";
  const Image target = bench::synth_background(a);
  const Image source = bench::synth_background(b);
  const Mask m = center_mask(10, 10, 3);
  const Image out = poisson_blend(source, target, m);
  for (Eigen::Index y = 0; y < 10; ++y)
    for (Eigen::Index x = 0; x < 10; ++x)
      if (!m(y, x)) CHECK(out.plane(0)(y, x) == target.plane(0)(y, x));
}

TEST_CASE("iterative, direct, and dense-oracle solvers agree on random cases") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    Image src(8, 8, 1), dst(8, 8, 1);
    for (Eigen::Index y = 0; y < 8; ++y)
      for (Eigen::Index x = 0; x < 8; ++x) {
        src.plane(0)(y, x) = static_cast<float>(rng.uniform());
        dst.plane(0)(y, x) = static_cast<float>(rng.uniform());
      }
    Mask m = Mask::Zero(8, 8);
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 11));
    for (int k = 0; k < n; ++k)
      m(1 + rng.uniform_int(0, 5), 1 + rng.uniform_int(0, 5)) = 1;

    PoissonOptions direct;
    direct.solver = PoissonSolver::Direct;
    PoissonOptions iterative;
    iterative.solver = PoissonSolver::ConjugateGradient;

    const Image d = poisson_blend(src, dst, m, direct);
    const Image i = poisson_blend(src, dst, m, iterative);
    const Image expected = oracle::dense_poisson(src, dst, m);
    CHECK(linf_diff(d, i) <= 1e-5);
    CHECK(linf_diff(d, expected) <= 1e-5);
  }
}

TEST_CASE("solutions superpose affinely in the boundary/source pair") {
  // With a fixed mask the solve is affine: blending (alpha*s1 + beta*s2,
  // alpha*t1 + beta*t2) equals the same combination of the two solutions
  // when alpha + beta = 1 (keeps results in range so clamping stays inert).
  Rng rng(78);
  Image s1(6, 6, 1), s2(6, 6, 1), t1(6, 6, 1), t2(6, 6, 1);
  for (Eigen::Index y = 0; y < 6; ++y)
    for (Eigen::Index x = 0; x < 6; ++x) {
      s1.plane(0)(y, x) = static_cast<float>(0.4 + 0.2 * rng.uniform());
      s2.plane(0)(y, x) = static_cast<float>(0.4 + 0.2 * rng.uniform());
      t1.plane(0)(y, x) = static_cast<float>(0.4 + 0.2 * rng.uniform());
      t2.plane(0)(y, x) = static_cast<float>(0.4 + 0.2 * rng.uniform());
    }
  const Mask m = center_mask(6, 6, 2);
  const double alpha = 0.3, beta = 0.7;
  Image sc(6, 6, 1), tc(6, 6, 1);
  sc.plane(0) = alpha * s1.plane(0) + beta * s2.plane(0);
  tc.plane(0) = alpha * t1.plane(0) + beta * t2.plane(0);

  const Image u1 = poisson_blend(s1, t1, m);
  const Image u2 = poisson_blend(s2, t2, m);
  const Image uc = poisson_blend(sc, tc, m);
  Image expect(6, 6, 1);
  expect.plane(0) = alpha * u1.plane(0) + beta * u2.plane(0);
  CHECK(linf_diff(uc, expect) <= 1e-6);
}

TEST_CASE("the solution minimizes the gradient-mismatch energy") {
  Rng rng(79);
  Image src(7, 7, 1), dst(7, 7, 1);
  for (Eigen::Index y = 0; y < 7; ++y)
    for (Eigen::Index x = 0; x < 7; ++x) {
      src.plane(0)(y, x) = static_cast<float>(0.45 + 0.1 * rng.uniform());
      dst.plane(0)(y, x) = static_cast<float>(0.3 + 0.4 * rng.uniform());
    }
  const Mask m = center_mask(7, 7, 2);
  const Image f = poisson_blend(src, dst, m);

  auto energy = [&](const Image& g) {
    double e = 0;
    for (Eigen::Index y = 0; y < 7; ++y)
      for (Eigen::Index x = 0; x < 7; ++x) {
        if (x + 1 < 7) {
          const double df = g.plane(0)(y, x + 1) - g.plane(0)(y, x);
          const double ds = src.plane(0)(y, x + 1) - src.plane(0)(y, x);
          if (m(y, x) || m(y, x + 1)) e += (df - ds) * (df - ds);
        }
        if (y + 1 < 7) {
          const double df = g.plane(0)(y + 1, x) - g.plane(0)(y, x);
          const double ds = src.plane(0)(y + 1, x) - src.plane(0)(y, x);
          if (m(y, x) || m(y + 1, x)) e += (df - ds) * (df - ds);
        }
      }
    return e;
  };

  const double base = energy(f);
  Rng pert(80);
  for (int trial = 0; trial < 30; ++trial) {
    Image g = f;
    for (Eigen::Index y = 0; y < 7; ++y)
      for (Eigen::Index x = 0; x < 7; ++x)
        if (m(y, x))
          g.plane(0)(y, x) += static_cast<float>((pert.uniform() - 0.5) * 2e-3);
    CHECK(energy(g) >= base - 1e-12);
  }
}

TEST_CASE("border-touching masks are shrunk and flagged") {
  const Image src = constant_image(5, 5, 0.8f);
  const Image dst = constant_image(5, 5, 0.3f);
  Mask edge = Mask::Zero(5, 5);
  edge(0, 2) = 1;
  edge(2, 2) = 1;
  PoissonStats st;
  const Image out = poisson_blend(src, dst, edge, {}, &st);
  CHECK(st.border_shrunk);
  CHECK(st.interior == 1);
  CHECK(out.plane(0)(0, 2) == dst.plane(0)(0, 2));

  // Every mask pixel on the border: nothing left to solve.
  Mask rim = Mask::Ones(3, 3);
  rim(1, 1) = 0;
  PoissonStats empty_st;
  const Image untouched = poisson_blend(src, dst, rim, {}, &empty_st);
  CHECK(empty_st.interior == 0);
  CHECK(bitwise_equal(untouched, dst));
}

TEST_CASE("a starved iteration budget raises a numeric error with the residual") {
  bench::TextureSpec a, b;
  a.rows = a.cols = b.rows = b.cols = 12;
  a.seed = 41;
  b.seed = 42;
  b.domain = "surface-A";
  PoissonOptions opt;
  opt.solver = PoissonSolver::ConjugateGradient;
  opt.max_iters = 1;
  opt.tol = 1e-12;
  CHECK_THROWS_WITH_AS(poisson_blend(bench::synth_background(b),
                                     bench::synth_background(a),
                                     center_mask(12, 12, 2), opt),
                       doctest::Contains("did not converge"), NumericError);
}

TEST_CASE("integration is idempotent for an already-consistent patch") {
  bench::TextureSpec spec;
  spec.rows = spec.cols = 12;
  spec.seed = 51;
  const Image bg = bench::synth_background(spec);
  const Mask m = center_mask(12, 12, 4);
  const Image out = integrate(bg, m, bg);
  CHECK(linf_diff(out, bg) <= 1e-5);
}

TEST_CASE("integrating an empty mask returns the background unchanged") {
  const Image bg = constant_image(6, 6, 0.4f);
  const Image syn = constant_image(6, 6, 0.9f);
  const Image out = integrate(syn, Mask::Zero(6, 6), bg);
  CHECK(bitwise_equal(out, bg));
}

TEST_CASE("integration removes the seam a hard paste would leave") {
  bench::TextureSpec spec;
  spec.rows = spec.cols = 16;
  spec.seed = 61;
  const Image bg = bench::synth_background(spec);

  // A crude foreign patch: bright constant square pasted over dark texture.
  Image syn = bg;
  const Mask m = center_mask(16, 16, 5);
  for (Eigen::Index y = 0; y < 16; ++y)
    for (Eigen::Index x = 0; x < 16; ++x)
      if (m(y, x)) syn.plane(0)(y, x) = 0.95f;

  const Image out = integrate(syn, m, bg);

  // Seam gate: the largest boundary-crossing step of the integrated result
  // must not exceed the background's own texture step by more than 0.05.
  auto max_boundary_step = [&](const Image& img) {
    double worst = 0;
    for (Eigen::Index y = 0; y < 16; ++y)
      for (Eigen::Index x = 0; x < 16; ++x) {
        if (x + 1 < 16 && m(y, x) != m(y, x + 1))
          worst = std::max(worst, std::abs(static_cast<double>(
                                      img.plane(0)(y, x + 1) - img.plane(0)(y, x))));
        if (y + 1 < 16 && m(y, x) != m(y + 1, x))
          worst = std::max(worst, std::abs(static_cast<double>(
                                      img.plane(0)(y + 1, x) - img.plane(0)(y, x))));
      }
    return worst;
  };

  const double pasted_seam = max_boundary_step(syn);
  const double blended_seam = max_boundary_step(out);
  const double texture_step = max_boundary_step(bg);
  CHECK(blended_seam <= texture_step + 0.05);
  CHECK(blended_seam < pasted_seam);
}

}  // TEST_SUITE
