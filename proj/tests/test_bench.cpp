#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include "defectgen/bench/dataset.hpp"
#include "defectgen/bench/synth.hpp"
#include "defectgen/core/io_png.hpp"

using namespace defectgen;
using namespace defectgen::bench;
namespace fs = std::filesystem;

namespace {

Image background(const std::string& domain, int size, std::uint64_t seed) {
  TextureSpec spec;
  spec.domain = domain;
  spec.rows = spec.cols = size;
  spec.seed = seed;
  return synth_background(spec);
}

bool quantized(const Image& img) {
  for (Eigen::Index y = 0; y < img.rows(); ++y)
    for (Eigen::Index x = 0; x < img.cols(); ++x) {
      const float v = img.plane(0)(y, x);
      const float k = std::round(v * 255.0f);
      if (std::abs(v - k / 255.0f) > 1e-7f) return false;
    }
  return true;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("defectgen_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("background textures are deterministic, quantized, and domain-separated") {
  const Image a1 = background("surface-A", 32, 7);
  const Image a2 = background("surface-A", 32, 7);
  CHECK(bitwise_equal(a1, a2));
  CHECK_FALSE(bitwise_equal(a1, background("surface-A", 32, 8)));

  const Image b = background("surface-B", 32, 7);
  CHECK(a1.rows() == 32);
  CHECK(a1.channels() == 1);
  CHECK(quantized(a1));
  CHECK(quantized(b));
  CHECK(a1.mean() > 0.6);
  CHECK(b.mean() < 0.5);
  CHECK(a1.mean() - b.mean() >= 0.2);
  CHECK(a1.min_value() >= 0.0f);
  CHECK(a1.max_value() <= 1.0f);

  TextureSpec bad;
  bad.domain = "surface-C";
  CHECK_THROWS_AS(synth_background(bad), ParamError);
  TextureSpec tiny;
  tiny.rows = 4;
  CHECK_THROWS_AS(synth_background(tiny), ParamError);
}

TEST_CASE("textures survive a PNG round-trip bitwise") {
  const fs::path dir = fresh_dir("bench_png");
  const Image img = background("surface-B", 24, 3);
  write_image_png(dir / "t.png", img);
  CHECK(bitwise_equal(read_image_png(dir / "t.png"), img));
}

TEST_CASE("scratch masks are exactly the changed pixels") {
  const Image bg = background("surface-B", 32, 11);
  DefectStroke stroke;
  stroke.points = {{6.0, 10.0}, {25.0, 14.0}};
  stroke.width = 2.0;
  stroke.intensity = -0.3;
  stroke.seed = 4;
  const LabeledSample s = synth_scratch(bg, stroke, "surface-B");

  REQUIRE(s.defect);
  CHECK(s.domain == "surface-B");
  CHECK(quantized(s.image));
  CHECK(mask_count(s.mask) > 0);
  for (Eigen::Index y = 0; y < 32; ++y)
    for (Eigen::Index x = 0; x < 32; ++x) {
      if (s.mask(y, x))
        CHECK(s.image.plane(0)(y, x) != bg.plane(0)(y, x));
      else
        CHECK(s.image.plane(0)(y, x) == bg.plane(0)(y, x));
    }
  CHECK((s.bbox == derive_bbox(s.mask)));

  const LabeledSample again = synth_scratch(bg, stroke, "surface-B");
  CHECK(bitwise_equal(again.image, s.image));
  CHECK((again.mask == s.mask).all());
}

TEST_CASE("a horizontal stroke yields a flat wide box") {
  const Image bg = background("surface-A", 32, 12);
  DefectStroke stroke;
  stroke.points = {{8.0, 16.0}, {23.0, 16.0}};
  stroke.width = 1.0;
  stroke.intensity = -0.35;
  stroke.seed = 1;
  const LabeledSample s = synth_scratch(bg, stroke);
  const int h = s.bbox.y_max - s.bbox.y_min + 1;
  const int w = s.bbox.x_max - s.bbox.x_min + 1;
  CHECK(h <= 2);
  CHECK(w >= 10);
}

TEST_CASE("degenerate strokes are rejected") {
  const Image bg = background("surface-B", 16, 13);
  DefectStroke stroke;
  stroke.points = {{4.0, 8.0}, {12.0, 8.0}};
  stroke.width = 1.5;
  stroke.intensity = 0.0;
  CHECK_THROWS_WITH_AS(synth_scratch(bg, stroke),
                       doctest::Contains("degenerate defect"), DataError);

  DefectStroke wide = stroke;
  wide.intensity = -0.3;
  wide.width = 5.0;
  CHECK_THROWS_AS(synth_scratch(bg, wide), ParamError);

  DefectStroke outside = stroke;
  outside.intensity = -0.3;
  outside.points = {{-2.0, 8.0}, {12.0, 8.0}};
  CHECK_THROWS_AS(synth_scratch(bg, outside), ParamError);
}

TEST_CASE("sampled strokes stay thin across seeds") {
  std::vector<double> widths;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const Image bg = background(seed % 2 ? "surface-A" : "surface-B", 48,
                                1000 + seed);
    const DefectStroke stroke = sample_stroke(48, 48, seed);
    const LabeledSample s = synth_scratch(bg, stroke);
    double length = 0;
    for (std::size_t i = 1; i < stroke.points.size(); ++i)
      length += std::hypot(stroke.points[i][0] - stroke.points[i - 1][0],
                           stroke.points[i][1] - stroke.points[i - 1][1]);
    REQUIRE(length > 0);
    widths.push_back(static_cast<double>(mask_count(s.mask)) / length);
  }
  std::sort(widths.begin(), widths.end());
  CHECK(widths[widths.size() / 2] <= 3.0);
}

TEST_CASE("preset datasets have the documented composition") {
  const fs::path dir = fresh_dir("bench_fewshot");
  DatasetOptions small;
  small.rows = small.cols = 24;
  small.test = 9;  // keep the unit run quick; counts below scale with options
  const DatasetManifest m = build_dataset("few_shot", 5, dir, small);

  CHECK(m.preset == "few_shot");
  CHECK(m.with_role(kRoleReference).size() == 4);
  CHECK(m.with_role(kRoleBackground).size() == 20);
  CHECK(m.with_role(kRoleTest).size() == 9);
  for (const auto* it : m.with_role(kRoleReference)) {
    CHECK(it->domain == "surface-B");
    CHECK(it->defect);
  }
  for (const auto* it : m.with_role(kRoleBackground)) CHECK_FALSE(it->defect);

  std::set<std::uint64_t> seeds;
  for (const auto& it : m.items) seeds.insert(it.seed);
  CHECK(seeds.size() == m.items.size());

  const fs::path dir2 = fresh_dir("bench_zeroshot");
  DatasetOptions zs;
  zs.rows = zs.cols = 24;
  zs.source_train = 6;
  zs.test = 5;
  const DatasetManifest z = build_dataset("zero_shot", 5, dir2, zs);
  CHECK(z.with_role(kRoleReference).size() == 4);
  CHECK(z.with_role(kRoleSourceTrain).size() == 6);
  CHECK(z.with_role(kRoleBackground).size() == 20);
  CHECK(z.with_role(kRoleTest).size() == 5);
  for (const auto* it : z.with_role(kRoleReference)) CHECK(it->domain == "surface-A");
  for (const auto* it : z.with_role(kRoleTest)) CHECK(it->domain == "surface-B");

  const fs::path dir3 = fresh_dir("bench_pretrain");
  DatasetOptions pt;
  pt.rows = pt.cols = 24;
  pt.pretrain_per_bucket = 3;
  const DatasetManifest p = build_dataset("pretrain", 5, dir3, pt);
  CHECK(p.items.size() == 12);  // 2 domains x {clean, defect} x 3

  CHECK_THROWS_AS(build_dataset("nonsense", 5, dir3, pt), ParamError);
}

TEST_CASE("default preset sizes match the experiment protocol") {
  // Composition only; build with tiny images to keep the test fast.
  DatasetOptions opt;
  opt.rows = opt.cols = 16;
  const fs::path dir = fresh_dir("bench_defaults");
  const DatasetManifest m = build_dataset("few_shot", 1, dir / "few", opt);
  CHECK(m.items.size() == 4 + 20 + 129);
  const DatasetManifest z = build_dataset("zero_shot", 1, dir / "zero", opt);
  CHECK(z.items.size() == 4 + 150 + 20 + 133);
}

TEST_CASE("manifest round-trips and items rematerialize bitwise") {
  const fs::path dir = fresh_dir("bench_manifest");
  DatasetOptions opt;
  opt.rows = opt.cols = 24;
  opt.test = 4;
  const DatasetManifest m = build_dataset("few_shot", 9, dir, opt);

  const DatasetManifest loaded = load_manifest(dir / "manifest.json");
  CHECK(loaded.preset == m.preset);
  CHECK(loaded.seed == m.seed);
  CHECK(loaded.rows == m.rows);
  REQUIRE(loaded.items.size() == m.items.size());
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    CHECK(loaded.items[i].id == m.items[i].id);
    CHECK(loaded.items[i].role == m.items[i].role);
    CHECK(loaded.items[i].seed == m.items[i].seed);
    CHECK((loaded.items[i].bbox == m.items[i].bbox));
  }

  for (const auto& it : loaded.items) {
    const LabeledSample s = materialize_item(it, loaded.rows, loaded.cols);
    const Image disk = read_image_png(dir / it.image_path);
    CHECK(bitwise_equal(s.image, disk));
    if (it.defect) {
      const Mask disk_mask = read_mask_png(dir / it.mask_path);
      CHECK((s.mask == disk_mask).all());
      CHECK((derive_bbox(s.mask) == it.bbox));
    }
  }
}

}  // TEST_SUITE
