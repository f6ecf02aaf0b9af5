#include "doctest.h"

#include <cstdint>

#include "defectgen/bench/synth.hpp"
#include "defectgen/generation/generate.hpp"

using namespace defectgen;
using namespace defectgen::diffusion;
using namespace defectgen::generation;

namespace {

UNetConfig tiny_config() {
  UNetConfig cfg;
  cfg.in_channels = 1;
  cfg.base = 4;
  cfg.token_dim = 8;
  cfg.attn_dim = 8;
  cfg.time_dim = 8;
  cfg.time_hidden = 16;
  return cfg;
}

inversion::ConceptEmbedding make_embedding(int dim, std::uint64_t seed) {
  inversion::ConceptEmbedding e;
  e.name = "<s*>";
  e.v.resize(dim);
  Rng rng(seed);
  for (int i = 0; i < dim; ++i) e.v(i) = static_cast<float>(rng.normal());
  return e;
}

GenerationRequest make_request(int size, std::uint64_t seed, int token_dim) {
  bench::TextureSpec spec;
  spec.rows = spec.cols = size;
  spec.seed = 77;
  GenerationRequest req;
  req.background = bench::synth_background(spec);
  req.defect_mask = Mask::Zero(size, size);
  for (Eigen::Index y = 3; y < 6; ++y)
    for (Eigen::Index x = 2; x < 7; ++x) req.defect_mask(y, x) = 1;
  req.embedding = make_embedding(token_dim, 5);
  req.prompt = concept_prompt("surface-B");
  req.seed = seed;
  return req;
}

}  // namespace

TEST_SUITE("generation") {

TEST_CASE("the guidance ramp runs from s_start at t=T to s_end at t=1") {
  const GuidanceSchedule gs{1.0, 7.5, 201};
  CHECK(guidance_scale_at(201, gs) == 1.0);
  CHECK(guidance_scale_at(1, gs) == 7.5);
  CHECK(guidance_scale_at(101, gs) == doctest::Approx(4.25).epsilon(1e-12));
  for (int t = 2; t <= 201; ++t)
    CHECK(guidance_scale_at(t, gs) <= guidance_scale_at(t - 1, gs));

  const GuidanceSchedule single{2.0, 9.0, 1};
  CHECK(guidance_scale_at(1, single) == 9.0);

  CHECK_THROWS_AS(guidance_scale_at(0, gs), ParamError);
  CHECK_THROWS_AS(guidance_scale_at(202, gs), ParamError);
}

TEST_CASE("an all-background mask reproduces the forward-diffused background") {
  const NoiseSchedule sched = build_schedule(8, 1e-3, 0.2);
  Rng init(3);
  Grid<float> x_t(4, 4, 1), x0_bg(4, 4, 1);
  init.fill_normal(x_t.plane(0));
  init.fill_normal(x0_bg.plane(0));
  const Mask keep_all = Mask::Ones(4, 4);
  auto zero_eps = [](const Grid<float>& z, int) {
    return Grid<float>(z.rows(), z.cols(), z.channels());
  };

  const int t = 5;
  Rng rng(11), replay(11);
  const Grid<float> out =
      blended_reverse_step_with(zero_eps, x_t, t, x0_bg, keep_all, sched, rng);

  // Replay the fixed draw order: the reverse step's noise comes first, the
  // q-branch noise second.
  normal_like(x_t, replay);
  const Grid<float> qn = normal_like(x_t, replay);
  CHECK(bitwise_equal(out, forward_diffuse(x0_bg, t - 1, qn, sched)));
}

TEST_CASE("an all-defect mask reduces to the plain reverse step") {
  const NoiseSchedule sched = build_schedule(8, 1e-3, 0.2);
  Rng init(4);
  Grid<float> x_t(4, 4, 1), x0_bg(4, 4, 1);
  init.fill_normal(x_t.plane(0));
  init.fill_normal(x0_bg.plane(0));
  const Mask keep_none = Mask::Zero(4, 4);
  auto eps_fn = [](const Grid<float>& z, int) {
    Grid<float> e = z;
    for (int c = 0; c < e.channels(); ++c) e.plane(c) *= 0.5f;
    return e;
  };

  const int t = 6;
  Rng rng(12), replay(12);
  const Grid<float> out =
      blended_reverse_step_with(eps_fn, x_t, t, x0_bg, keep_none, sched, rng);
  const Grid<float> expect =
      reverse_step_from_eps(x_t, t, eps_fn(x_t, t), sched, replay);
  CHECK(bitwise_equal(out, expect));
}

TEST_CASE("final-step blend pins background cells and denoises defect cells") {
  // Hand-solvable T=1 schedule: beta = 0.75 so sqrt(alpha_bar) = 0.5 and a
  // zero noise estimate makes the clean prediction exactly 2*x_t.
  NoiseSchedule sched;
  sched.T = 1;
  sched.beta = Eigen::ArrayXd::Constant(1, 0.75);
  sched.alpha_bar = Eigen::ArrayXd::Constant(1, 0.25);

  Grid<float> x_t(1, 2, 1), x0_bg(1, 2, 1);
  x_t.plane(0) << 0.42f, -0.15f;
  x0_bg.plane(0) << 0.7f, 0.55f;
  Mask m_bg(1, 2);
  m_bg << 1, 0;
  auto zero_eps = [](const Grid<float>& z, int) {
    return Grid<float>(z.rows(), z.cols(), z.channels());
  };

  Rng rng(1);
  const Grid<float> out =
      blended_reverse_step_with(zero_eps, x_t, 1, x0_bg, m_bg, sched, rng);
  CHECK(out.plane(0)(0, 0) == 0.7f);    // q at t=1 is the background itself
  CHECK(out.plane(0)(0, 1) == -0.3f);   // 2 * x_t on the synthesized cell
}

TEST_CASE("background cells are independent of the noise estimator") {
  const NoiseSchedule sched = build_schedule(6, 1e-3, 0.2);
  Rng init(9);
  Grid<float> x0_bg(6, 6, 1);
  init.fill_normal(x0_bg.plane(0));
  Mask m_bg = Mask::Ones(6, 6);
  for (Eigen::Index y = 2; y < 4; ++y)
    for (Eigen::Index x = 2; x < 5; ++x) m_bg(y, x) = 0;

  auto run = [&](float gain) {
    auto eps_fn = [gain](const Grid<float>& z, int) {
      Grid<float> e = z;
      for (int c = 0; c < e.channels(); ++c) e.plane(c) *= gain;
      return e;
    };
    Rng rng(31);
    Grid<float> x = normal_like(x0_bg, rng);
    for (int t = sched.T; t >= 1; --t)
      x = blended_reverse_step_with(eps_fn, x, t, x0_bg, m_bg, sched, rng);
    return x;
  };

  const Grid<float> a = run(0.0f);
  const Grid<float> b = run(0.8f);
  bool defect_differs = false;
  for (Eigen::Index y = 0; y < 6; ++y)
    for (Eigen::Index x = 0; x < 6; ++x) {
      if (m_bg(y, x)) {
        CHECK(a.plane(0)(y, x) == b.plane(0)(y, x));
      } else if (a.plane(0)(y, x) != b.plane(0)(y, x)) {
        defect_differs = true;
      }
    }
  CHECK(defect_differs);
}

TEST_CASE("generated samples keep every non-mask pixel bitwise intact") {
  Rng rng(21);
  DenoiserModel<float> model(tiny_config(), default_vocab(), rng);
  const NoiseSchedule sched = build_schedule(6, 1e-3, 0.15);
  const Autoencoder<float> ae;

  const GenerationRequest req = make_request(8, 99, model.cfg.token_dim);
  const SynthesisResult res = generate_defect(req, model, ae, sched);

  REQUIRE(res.image.rows() == 8);
  CHECK((res.mask == req.defect_mask).all());
  CHECK((res.bbox == PixelBox{2, 3, 6, 5}));
  CHECK(res.image.all_finite());
  CHECK(res.provenance.contains("token"));
  CHECK(res.provenance["seed"] == 99);

  for (Eigen::Index y = 0; y < 8; ++y)
    for (Eigen::Index x = 0; x < 8; ++x)
      if (!req.defect_mask(y, x))
        CHECK(res.image.plane(0)(y, x) == req.background.plane(0)(y, x));
}

TEST_CASE("generation is seed-deterministic and seed-sensitive") {
  Rng rng(22);
  DenoiserModel<float> model(tiny_config(), default_vocab(), rng);
  const NoiseSchedule sched = build_schedule(6, 1e-3, 0.15);
  const Autoencoder<float> ae;

  const GenerationRequest req = make_request(8, 5, model.cfg.token_dim);
  const SynthesisResult a = generate_defect(req, model, ae, sched);
  const SynthesisResult b = generate_defect(req, model, ae, sched);
  CHECK(bitwise_equal(a.image, b.image));

  GenerationRequest other = req;
  other.seed = 6;
  const SynthesisResult c = generate_defect(other, model, ae, sched);
  CHECK_FALSE(bitwise_equal(a.image, c.image));
}

TEST_CASE("generation requests are validated") {
  Rng rng(23);
  DenoiserModel<float> model(tiny_config(), default_vocab(), rng);
  const NoiseSchedule sched = build_schedule(6, 1e-3, 0.15);
  const Autoencoder<float> ae;
  const GenerationRequest good = make_request(8, 1, model.cfg.token_dim);

  GenerationRequest empty = good;
  empty.defect_mask.setZero();
  CHECK_THROWS_AS(generate_defect(empty, model, ae, sched), ParamError);

  GenerationRequest backwards = good;
  backwards.s_start = 9.0;
  backwards.s_end = 2.0;
  CHECK_THROWS_AS(generate_defect(backwards, model, ae, sched), ParamError);

  GenerationRequest wrong_dim = good;
  wrong_dim.embedding = make_embedding(model.cfg.token_dim + 1, 2);
  CHECK_THROWS_AS(generate_defect(wrong_dim, model, ae, sched), ParamError);

  GenerationRequest wide = good;
  wide.blend_dilation = 4;
  CHECK_THROWS_AS(generate_defect(wide, model, ae, sched), ParamError);

  GenerationRequest lopsided = good;
  lopsided.defect_mask = Mask::Zero(8, 10);
  lopsided.defect_mask(1, 1) = 1;
  CHECK_THROWS_AS(generate_defect(lopsided, model, ae, sched), ShapeError);
}

}  // TEST_SUITE
