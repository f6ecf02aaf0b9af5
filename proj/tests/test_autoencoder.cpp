#include "doctest.h"

#include <vector>

#include "defectgen/bench/synth.hpp"
#include "defectgen/diffusion/autoencoder.hpp"

using namespace defectgen;
using namespace defectgen::diffusion;

TEST_SUITE("autoencoder") {

TEST_CASE("the identity codec is a bitwise no-op with factor 1") {
  Autoencoder<float> ae;
  CHECK(ae.mode() == Autoencoder<float>::Mode::Identity);
  CHECK(ae.factor() == 1);
  CHECK(ae.latent_channels(3) == 3);

  Grid<float> img(5, 7, 2);
  Rng rng(3);
  rng.fill_normal(img.plane(0));
  rng.fill_normal(img.plane(1));
  CHECK(bitwise_equal(ae.encode(img), img));
  CHECK(bitwise_equal(ae.decode(img), img));
  CHECK_THROWS_AS(ae.train_step(img), ParamError);
}

TEST_CASE("learned-mode construction validates its arguments") {
  Rng rng(4);
  CHECK_THROWS_AS(Autoencoder<float>::learned(3, 1, 4, rng), ParamError);
  CHECK_THROWS_AS(Autoencoder<float>::learned(0, 1, 4, rng), ParamError);
  CHECK_THROWS_AS(Autoencoder<float>::learned(2, 1, 0, rng), ParamError);

  auto ae = Autoencoder<float>::learned(4, 1, 4, rng);
  CHECK(ae.factor() == 4);
  CHECK(ae.latent_channels(1) == 4);
  CHECK_THROWS_AS(ae.encode(Grid<float>(6, 8, 1)), ShapeError);
}

TEST_CASE("learned codec halves the spatial size per stage") {
  Rng rng(5);
  auto ae = Autoencoder<float>::learned(2, 1, 4, rng);
  Grid<float> img(16, 12, 1);
  img.plane(0).setConstant(0.5f);
  const Grid<float> z = ae.encode(img);
  CHECK(z.rows() == 8);
  CHECK(z.cols() == 6);
  CHECK(z.channels() == 4);
  const Grid<float> back = ae.decode(z);
  CHECK(back.rows() == 16);
  CHECK(back.cols() == 12);
  CHECK(back.channels() == 1);
  CHECK(back.min_value() >= 0.0f);
  CHECK(back.max_value() <= 1.0f);
}

TEST_CASE("psnr conventions") {
  Grid<float> a(4, 4, 1), b(4, 4, 1);
  a.plane(0).setConstant(0.3f);
  b.plane(0).setConstant(0.3f);
  CHECK(psnr(a, b) == 99.0);
  b.plane(0).setConstant(0.4f);
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-3));
}

TEST_CASE("a trained codec reconstructs held-out texture above 25 dB") {
  std::vector<Grid<float>> train;
  for (int i = 0; i < 8; ++i) {
    bench::TextureSpec spec;
    spec.domain = "surface-B";
    spec.rows = spec.cols = 32;
    spec.seed = 100 + static_cast<std::uint64_t>(i);
    train.push_back(bench::synth_background(spec));
  }
  bench::TextureSpec held;
  held.domain = "surface-B";
  held.rows = held.cols = 32;
  held.seed = 999;
  const Grid<float> heldout = bench::synth_background(held);

  Rng rng(6);
  auto ae = Autoencoder<float>::learned(2, 1, 4, rng);
  Rng train_rng(7);
  const auto trace = train_autoencoder(ae, train, 1500, 2e-3, train_rng);
  REQUIRE(trace.size() == 1500);

  const double d = psnr(heldout, ae.decode(ae.encode(heldout)));
  CHECK_MESSAGE(d >= 25.0, "held-out PSNR ", d, " dB");
}

}  // TEST_SUITE
