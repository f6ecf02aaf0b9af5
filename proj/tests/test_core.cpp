#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/grid.hpp"
#include "defectgen/core/hash.hpp"
#include "defectgen/core/io_png.hpp"
#include "defectgen/core/mask.hpp"
#include "defectgen/core/rng.hpp"

using namespace defectgen;

namespace {

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / "defectgen_test_core";
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("rng streams are seed-deterministic") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    const double va = a.normal(), vb = b.normal(), vc = c.normal();
    all_equal = all_equal && va == vb;
    any_diff = any_diff || va != vc;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("derive_seed separates streams and bases") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}

TEST_CASE("hash_uniform is stateless and in [0,1)") {
  for (std::uint64_t i = 0; i < 200; ++i) {
    const double v = hash_uniform(9, i, i * 3, 1);
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    CHECK(v == hash_uniform(9, i, i * 3, 1));
  }
}

TEST_CASE("uniform_int respects inclusive bounds") {
  Rng rng(5);
  bool saw_lo = false, saw_hi = false;
  for (int i = 0; i < 400; ++i) {
    const long v = rng.uniform_int(2, 5);
    CHECK(v >= 2);
    CHECK(v <= 5);
    saw_lo = saw_lo || v == 2;
    saw_hi = saw_hi || v == 5;
  }
  CHECK(saw_lo);
  CHECK(saw_hi);
}

TEST_CASE("grid shape and value helpers") {
  CHECK_THROWS_AS(Image(0, 4, 1), ShapeError);
  CHECK_THROWS_AS(Image(4, 4, 0), ShapeError);

  Image g = Image::constant(3, 5, 2, 0.25f);
  CHECK(g.rows() == 3);
  CHECK(g.cols() == 5);
  CHECK(g.channels() == 2);
  CHECK(g.size() == 30);
  CHECK(g.mean() == doctest::Approx(0.25));
  CHECK(g.min_value() == 0.25f);
  CHECK(g.max_value() == 0.25f);
  CHECK(g.all_finite());

  Image h = g;
  h.plane(1)(2, 4) = 3.0f;
  CHECK(linf_diff(g, h) == doctest::Approx(2.75));
  CHECK_FALSE(bitwise_equal(g, h));
  h.clamp(0.0f, 1.0f);
  CHECK(h.max_value() == 1.0f);

  CHECK_THROWS_AS(require_same_shape(g, Image(3, 5, 1), "test"), ShapeError);
}

TEST_CASE("mask dilation uses a square structuring element") {
  Mask m = Mask::Zero(5, 5);
  m(2, 2) = 1;
  const Mask d = dilate_mask(m, 1);
  CHECK(mask_count(d) == 9);
  for (int y = 1; y <= 3; ++y)
    for (int x = 1; x <= 3; ++x) CHECK(d(y, x) == 1);
  CHECK(d(0, 0) == 0);
  // Radius 0 is the identity.
  CHECK((dilate_mask(m, 0) == m).all());
}

TEST_CASE("mask downsampling max-pools blocks") {
  // All-zero stays zero.
  CHECK(mask_empty(downsample_mask(Mask::Zero(4, 4), 2)));

  // A single pixel claims its block.
  Mask one = Mask::Zero(4, 4);
  one(3, 1) = 1;
  const Mask d1 = downsample_mask(one, 2);
  CHECK(mask_count(d1) == 1);
  CHECK(d1(1, 0) == 1);

  // 4x4 checkerboard, f=2: every block holds a set pixel.
  Mask cb(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) cb(y, x) = static_cast<std::uint8_t>((x + y) % 2);
  const Mask d2 = downsample_mask(cb, 2);
  CHECK(mask_count(d2) == 4);

  CHECK_THROWS_AS(downsample_mask(Mask::Zero(5, 4), 2), ShapeError);
  CHECK_THROWS_AS(downsample_mask(Mask::Zero(4, 4), 0), ParamError);
}

TEST_CASE("derive_bbox is the tight inclusive rectangle") {
  Mask m = Mask::Zero(8, 8);
  m(5, 3) = 1;  // (x=3, y=5)
  CHECK(derive_bbox(m) == PixelBox{3, 5, 3, 5});

  Mask full = Mask::Constant(6, 9, 1);
  CHECK(derive_bbox(full) == PixelBox{0, 0, 8, 5});

  Mask two = Mask::Zero(8, 8);
  two(2, 1) = 1;  // (1,2)
  two(4, 7) = 1;  // (7,4)
  CHECK(derive_bbox(two) == PixelBox{1, 2, 7, 4});

  CHECK_THROWS_AS(derive_bbox(Mask::Zero(4, 4)), ParamError);
}

TEST_CASE("fnv1a64 and crc32 match their reference vectors") {
  CHECK(fnv1a64(std::string("")) == 0xCBF29CE484222325ull);
  CHECK(fnv1a64(std::string("a")) == 0xAF63DC4C8601EC8Cull);
  const char* check = "123456789";
  CHECK(crc32_bytes(check, 9) == 0xCBF43926u);
  CHECK(hex64(0xDEADBEEFull) == "00000000deadbeef");
}

TEST_CASE("image png round-trips quantized values bitwise") {
  const auto dir = temp_dir();
  Rng rng(11);
  Image img(12, 10, 1);
  for (Eigen::Index y = 0; y < 12; ++y)
    for (Eigen::Index x = 0; x < 10; ++x)
      img.plane(0)(y, x) =
          static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
  const auto p = dir / "gray.png";
  write_image_png(p, img);
  CHECK(bitwise_equal(read_image_png(p), img));

  Image rgb(6, 7, 3);
  for (int c = 0; c < 3; ++c)
    for (Eigen::Index y = 0; y < 6; ++y)
      for (Eigen::Index x = 0; x < 7; ++x)
        rgb.plane(c)(y, x) = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
  const auto p3 = dir / "rgb.png";
  write_image_png(p3, rgb);
  CHECK(bitwise_equal(read_image_png(p3), rgb));
}

TEST_CASE("mask png round-trips and rejects gray values") {
  const auto dir = temp_dir();
  Mask m = Mask::Zero(9, 9);
  m(4, 4) = m(1, 7) = 1;
  const auto p = dir / "mask.png";
  write_mask_png(p, m);
  CHECK((read_mask_png(p) == m).all());

  // A 0.5-gray image is not a valid binary mask file.
  const auto bad = dir / "gray_mask.png";
  write_image_png(bad, Image::constant(4, 4, 1, 0.5f));
  CHECK_THROWS_AS(read_mask_png(bad), FormatError);
}

TEST_CASE("missing files produce data errors") {
  CHECK_THROWS_AS(read_image_png(temp_dir() / "nope.png"), DataError);
  CHECK_THROWS_AS(fnv1a64_file(temp_dir() / "nope.bin"), DataError);
}

}  // TEST_SUITE
