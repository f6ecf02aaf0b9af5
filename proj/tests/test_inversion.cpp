#include "doctest.h"

#include <algorithm>
#include <vector>

#include "defectgen/bench/synth.hpp"
#include "defectgen/diffusion/train.hpp"
#include "defectgen/inversion/inversion.hpp"

using namespace defectgen;
using namespace defectgen::diffusion;
using namespace defectgen::inversion;

namespace {

UNetConfig tiny_config() {
  UNetConfig cfg;
  cfg.in_channels = 1;
  cfg.base = 8;
  cfg.token_dim = 8;
  cfg.attn_dim = 8;
  cfg.time_dim = 8;
  cfg.time_hidden = 16;
  return cfg;
}

Reference<float> make_reference(std::uint64_t seed, double x_shift = 0.0) {
  bench::TextureSpec spec;
  spec.rows = spec.cols = 16;
  spec.seed = seed;
  const Image bg = bench::synth_background(spec);
  bench::DefectStroke stroke;
  stroke.points = {{4.0 + x_shift, 6.0}, {11.0 + x_shift, 9.0}};
  stroke.width = 2.0;
  stroke.intensity = -0.3;
  stroke.seed = seed;
  const auto sample = bench::synth_scratch(bg, stroke);
  return {sample.image, sample.mask};
}

ReferenceSet<float> make_reference_set() {
  ReferenceSet<float> rs;
  rs.prompt = concept_prompt("surface-B");
  for (std::uint64_t s = 0; s < 3; ++s)
    rs.refs.push_back(make_reference(40 + s, static_cast<double>(s) * 0.5));
  return rs;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST_SUITE("inversion") {

TEST_CASE("masked loss follows its closed-form definition") {
  Grid<float> eps(1, 2, 1), eps_hat(1, 2, 1);
  eps.plane(0) << 1.0f, 3.0f;
  eps_hat.plane(0).setZero();
  Mask m(1, 2);
  m << 1, 0;
  CHECK(masked_loss(eps, eps_hat, m) == 1.0);

  Mask all = Mask::Ones(1, 2);
  CHECK(masked_loss(eps, eps_hat, all) == doctest::Approx(5.0));  // (1+9)/2
  CHECK(masked_loss(eps, eps, all) == 0.0);

  CHECK_THROWS_WITH_AS(masked_loss(eps, eps_hat, Mask::Zero(1, 2)),
                       doctest::Contains("empty defect mask"), DataError);
  CHECK_THROWS_AS(masked_loss(eps, Grid<float>(2, 2, 1), all), ShapeError);
}

TEST_CASE("masked loss and gradient ignore everything outside the mask") {
  Rng rng(8);
  Grid<float> eps(4, 4, 2), eps_hat(4, 4, 2);
  for (int c = 0; c < 2; ++c) {
    rng.fill_normal(eps.plane(c));
    rng.fill_normal(eps_hat.plane(c));
  }
  Mask m = Mask::Zero(4, 4);
  m(1, 1) = m(2, 3) = 1;

  const double base = masked_loss(eps, eps_hat, m);
  const Grid<float> gbase = masked_loss_grad(eps, eps_hat, m);

  Grid<float> poked = eps_hat;
  for (Eigen::Index y = 0; y < 4; ++y)
    for (Eigen::Index x = 0; x < 4; ++x)
      if (!m(y, x))
        for (int c = 0; c < 2; ++c) poked.plane(c)(y, x) += 100.0f;

  CHECK(masked_loss(eps, poked, m) == base);
  CHECK(bitwise_equal(masked_loss_grad(eps, poked, m), gbase));
  for (int c = 0; c < 2; ++c)
    for (Eigen::Index y = 0; y < 4; ++y)
      for (Eigen::Index x = 0; x < 4; ++x)
        if (!m(y, x)) CHECK(gbase.plane(c)(y, x) == 0.0f);
}

TEST_CASE("reference sets are validated before any optimization") {
  auto rs = make_reference_set();
  CHECK_NOTHROW(validate_reference_set(rs));

  auto two = rs;
  two.refs.pop_back();
  CHECK_THROWS_WITH_AS(validate_reference_set(two), doctest::Contains("[3,5]"),
                       DataError);

  auto six = rs;
  while (six.refs.size() < 6) six.refs.push_back(rs.refs[0]);
  CHECK_THROWS_AS(validate_reference_set(six), DataError);

  auto noslot = rs;
  noslot.prompt = defect_prompt("surface-B");
  CHECK_THROWS_AS(validate_reference_set(noslot), ParamError);

  auto blank = rs;
  blank.refs[1].mask.setZero();
  CHECK_THROWS_AS(validate_reference_set(blank), DataError);

  auto lopsided = rs;
  lopsided.refs[0].mask = Mask::Zero(8, 8);
  lopsided.refs[0].mask(4, 4) = 1;
  CHECK_THROWS_AS(validate_reference_set(lopsided), ShapeError);
}

TEST_CASE("context masking neutralizes everything outside the dilated mask") {
  Grid<float> img(5, 5, 1);
  img.plane(0).setConstant(0.9f);
  Mask m = Mask::Zero(5, 5);
  m(2, 2) = 1;

  const Grid<float> tight = mask_to_neutral(img, m, 0);
  CHECK(tight.plane(0)(2, 2) == 0.9f);
  CHECK(tight.plane(0)(0, 0) == 0.5f);
  CHECK(tight.plane(0)(2, 3) == 0.5f);

  const Grid<float> ring = mask_to_neutral(img, m, 1);
  CHECK(ring.plane(0)(2, 3) == 0.9f);
  CHECK(ring.plane(0)(0, 0) == 0.5f);
}

TEST_CASE("zero steps return the seed-word embedding unchanged") {
  Rng rng(10);
  DenoiserModel<float> model(tiny_config(), default_vocab(), rng);
  InversionOptions opt;
  opt.steps = 0;
  const auto res = learn_concept(model, Autoencoder<float>{}, make_reference_set(),
                                 build_schedule(10, 1e-4, 0.05), opt, 3);
  CHECK(res.trace.empty());
  const Vec<float> init =
      model.text.table.row(model.text.token_id("defect")).transpose();
  CHECK((res.v.array() == init.array()).all());
}

TEST_CASE("concept learning is deterministic and leaves the model frozen") {
  Rng rng(11);
  DenoiserModel<float> model(tiny_config(), default_vocab(), rng);
  const auto fingerprint = model.param_fingerprint();
  InversionOptions opt;
  opt.steps = 30;

  const auto a = learn_concept(model, Autoencoder<float>{}, make_reference_set(),
                               build_schedule(10, 1e-4, 0.05), opt, 17);
  const auto b = learn_concept(model, Autoencoder<float>{}, make_reference_set(),
                               build_schedule(10, 1e-4, 0.05), opt, 17);
  CHECK(a.trace == b.trace);
  CHECK((a.v.array() == b.v.array()).all());
  CHECK(model.param_fingerprint() == fingerprint);

  const auto c = learn_concept(model, Autoencoder<float>{}, make_reference_set(),
                               build_schedule(10, 1e-4, 0.05), opt, 18);
  CHECK(!(a.v.array() == c.v.array()).all());
}

TEST_CASE("background pixels outside the mask cannot leak into the embedding") {
  Rng rng(12);
  DenoiserModel<float> model(tiny_config(), default_vocab(), rng);
  InversionOptions opt;
  opt.steps = 25;
  const NoiseSchedule sched = build_schedule(10, 1e-4, 0.05);

  const auto rs = make_reference_set();
  auto scrambled = rs;
  Rng junk(99);
  for (auto& r : scrambled.refs)
    for (Eigen::Index y = 0; y < r.image.rows(); ++y)
      for (Eigen::Index x = 0; x < r.image.cols(); ++x)
        if (!r.mask(y, x))
          r.image.plane(0)(y, x) = static_cast<float>(junk.uniform());

  const auto a = learn_concept(model, Autoencoder<float>{}, rs, sched, opt, 21);
  const auto b = learn_concept(model, Autoencoder<float>{}, scrambled, sched, opt, 21);
  CHECK(a.trace == b.trace);
  CHECK((a.v.array() == b.v.array()).all());
}

TEST_CASE("the masked objective trends downward on a trained backbone") {
  const NoiseSchedule sched = build_schedule(20, 1e-4, 0.05);
  Rng rng(13);
  DenoiserModel<float> model(tiny_config(), default_vocab(), rng);

  std::vector<LabeledImage<float>> pretrain;
  for (std::uint64_t s = 0; s < 4; ++s) {
    bench::TextureSpec spec;
    spec.rows = spec.cols = 16;
    spec.seed = 200 + s;
    pretrain.push_back({bench::synth_background(spec), clean_prompt("surface-B")});
  }
  TrainOptions topt;
  topt.steps = 250;
  train_denoiser(model, pretrain, sched, Autoencoder<float>{}, topt, 5);

  int downward = 0;
  for (std::uint64_t seed : {31ull, 32ull, 33ull}) {
    InversionOptions opt;
    opt.steps = 300;
    const auto res = learn_concept(model, Autoencoder<float>{}, make_reference_set(),
                                   sched, opt, seed);
    const std::size_t k = res.trace.size() / 10;
    const std::vector<double> head(res.trace.begin(), res.trace.begin() + k);
    const std::vector<double> tail(res.trace.end() - k, res.trace.end());
    if (median_of(tail) < median_of(head)) ++downward;
  }
  CHECK(downward >= 2);
}

}  // TEST_SUITE
