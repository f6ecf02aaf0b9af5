#include "doctest.h"

#include <cmath>
#include <vector>

#include "defectgen/core/grid.hpp"
#include "defectgen/core/mask.hpp"
#include "defectgen/core/rng.hpp"
#include "defectgen/diffusion/model.hpp"
#include "defectgen/diffusion/unet.hpp"
#include "defectgen/diffusion/vocab.hpp"
#include "defectgen/inversion/inversion.hpp"
#include "defectgen/nn/layers.hpp"

using namespace defectgen;
using namespace defectgen::diffusion;

namespace {

UNetConfig tiny_config() {
  UNetConfig cfg;
  cfg.in_channels = 1;
  cfg.base = 4;
  cfg.token_dim = 6;
  cfg.attn_dim = 5;
  cfg.time_dim = 8;
  cfg.time_hidden = 10;
  return cfg;
}

// Passes when the relative error is within tol; an absolute floor absorbs
// coordinates whose true gradient is numerically zero.
void check_grad_pair(double analytic, double fd, double tol) {
  const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-9});
  const double rel = std::abs(analytic - fd) / denom;
  const bool ok = rel <= tol || std::abs(analytic - fd) <= 1e-9;
  CHECK_MESSAGE(ok, "analytic=", analytic, " fd=", fd, " rel=", rel);
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("denoising-loss gradients match central finite differences") {
  Rng rng(101);
  DenoiserModel<double> model(tiny_config(), default_vocab(), rng);
  const int H = 4, W = 4;

  Mat<double> z(H * W, 1), y(H * W, 1);
  rng.fill_normal(z);
  rng.fill_normal(y);
  const Prompt prompt = defect_prompt("surface-B");
  const double t = 3.0;

  auto loss_fn = [&]() {
    Mat<double> tokens = model.text.encode(prompt, nullptr);
    Mat<double> out = model.unet.forward(z, H, W, t, tokens, nullptr);
    return (out - y).array().square().sum() / static_cast<double>(out.size());
  };

  // Analytic pass.
  model.zero_grads();
  {
    Mat<double> tokens = model.text.encode(prompt, nullptr);
    UNet<double>::Acts acts;
    Mat<double> out = model.unet.forward(z, H, W, t, tokens, &acts);
    Mat<double> g =
        ((out - y).array() * (2.0 / static_cast<double>(out.size()))).matrix();
    Mat<double> gtokens = Mat<double>::Zero(tokens.rows(), tokens.cols());
    model.unet.backward(acts, g, &gtokens);
    model.text.accumulate_grads(prompt, gtokens, nullptr, true);
  }

  const double h = 1e-4;
  int checked = 0;
  Rng pick(55);
  for (auto& p : model.params()) {
    for (int rep = 0; rep < 2; ++rep) {
      const long r = pick.uniform_int(0, p.w->rows() - 1);
      const long c = pick.uniform_int(0, p.w->cols() - 1);
      const double analytic = (*p.g)(r, c);
      const double keep = (*p.w)(r, c);
      (*p.w)(r, c) = keep + h;
      const double lp = loss_fn();
      (*p.w)(r, c) = keep - h;
      const double lm = loss_fn();
      (*p.w)(r, c) = keep;
      check_grad_pair(analytic, (lp - lm) / (2 * h), 1e-3);
      ++checked;
    }
  }
  CHECK(checked >= 20);
}

TEST_CASE("masked-loss gradient for the concept vector matches finite differences") {
  Rng rng(202);
  UNetConfig cfg = tiny_config();
  cfg.token_dim = 24;
  DenoiserModel<double> model(cfg, default_vocab(), rng);
  const int H = 4, W = 4;

  Grid<double> zt(H, W, 1), eps(H, W, 1);
  rng.fill_normal(zt.plane(0));
  rng.fill_normal(eps.plane(0));
  Mask m = Mask::Zero(H, W);
  m(1, 1) = m(1, 2) = m(2, 2) = 1;

  const Prompt prompt = concept_prompt("surface-B");
  Vec<double> v(cfg.token_dim);
  rng.fill_normal(v);
  const double t = 2.0;

  auto loss_fn = [&](const Vec<double>& vv) {
    Mat<double> tokens = model.text.encode(prompt, &vv);
    Mat<double> out = model.unet.forward(nn::grid_to_mat(zt), H, W, t, tokens, nullptr);
    return inversion::masked_loss(eps, nn::mat_to_grid(out, H, W), m);
  };

  // Analytic gradient w.r.t. v only (model frozen).
  Vec<double> gv = Vec<double>::Zero(cfg.token_dim);
  {
    Mat<double> tokens = model.text.encode(prompt, &v);
    UNet<double>::Acts acts;
    Mat<double> out = model.unet.forward(nn::grid_to_mat(zt), H, W, t, tokens, &acts);
    Grid<double> g =
        inversion::masked_loss_grad(eps, nn::mat_to_grid(out, H, W), m);
    Mat<double> gtokens = Mat<double>::Zero(tokens.rows(), tokens.cols());
    model.unet.backward(acts, nn::grid_to_mat(g), &gtokens, /*param_grads=*/false);
    model.text.accumulate_grads(prompt, gtokens, &gv, /*table_grads=*/false);
  }

  const double h = 1e-4;
  for (int i = 0; i < cfg.token_dim; ++i) {
    Vec<double> vp = v, vm = v;
    vp(i) += h;
    vm(i) -= h;
    check_grad_pair(gv(i), (loss_fn(vp) - loss_fn(vm)) / (2 * h), 1e-3);
  }
}

TEST_CASE("pooling and upsampling backward passes are exact adjoints") {
  Rng rng(7);
  const int h = 8, w = 6, C = 3;

  Mat<double> x(h * w, C), yp(h / 2 * w / 2, C);
  rng.fill_normal(x);
  rng.fill_normal(yp);
  const double lhs_pool = (nn::avgpool2(x, h, w).array() * yp.array()).sum();
  const double rhs_pool =
      (x.array() * nn::avgpool2_backward(yp, h, w).array()).sum();
  CHECK(lhs_pool == doctest::Approx(rhs_pool).epsilon(1e-12));

  Mat<double> xu(h * w, C), yu(4 * h * w, C);
  rng.fill_normal(xu);
  rng.fill_normal(yu);
  const double lhs_up = (nn::upsample2(xu, h, w).array() * yu.array()).sum();
  const double rhs_up =
      (xu.array() * nn::upsample2_backward(yu, h, w).array()).sum();
  CHECK(lhs_up == doctest::Approx(rhs_up).epsilon(1e-12));
}

TEST_CASE("im2col and col2im are adjoint for both strides") {
  Rng rng(8);
  const int H = 6, W = 8, C = 2, k = 3;
  for (int stride : {1, 2}) {
    Mat<double> x(H * W, C);
    rng.fill_normal(x);
    Mat<double> cols;
    nn::im2col(x, H, W, C, k, stride, cols);
    Mat<double> y(cols.rows(), cols.cols());
    rng.fill_normal(y);
    Mat<double> back;
    nn::col2im(y, H, W, C, k, stride, back);
    const double lhs = (cols.array() * y.array()).sum();
    const double rhs = (x.array() * back.array()).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("silu backward matches finite differences") {
  Rng rng(9);
  Mat<double> x(5, 4);
  rng.fill_normal(x);
  Mat<double> ones = Mat<double>::Ones(5, 4);
  const Mat<double> g = nn::silu_backward(x, ones);
  const double h = 1e-6;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 4; ++c) {
      Mat<double> xp = x, xm = x;
      xp(r, c) += h;
      xm(r, c) -= h;
      const double fd =
          (nn::silu(xp)(r, c) - nn::silu(xm)(r, c)) / (2 * h);
      CHECK(g(r, c) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("grid/matrix bridging preserves the pixel layout") {
  Grid<float> g(3, 4, 2);
  float v = 0.0f;
  for (int c = 0; c < 2; ++c)
    for (Eigen::Index y = 0; y < 3; ++y)
      for (Eigen::Index x = 0; x < 4; ++x) g.plane(c)(y, x) = v += 1.0f;

  const Mat<float> m = nn::grid_to_mat(g);
  REQUIRE(m.rows() == 12);
  REQUIRE(m.cols() == 2);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 4; ++x)
        CHECK(m(x * 3 + y, c) == g.plane(c)(y, x));

  CHECK(bitwise_equal(nn::mat_to_grid(m, 3, 4), g));
  CHECK_THROWS_AS(nn::mat_to_grid(m, 4, 4), ShapeError);
}

TEST_CASE("sinusoidal embeddings are bounded sin/cos pairs") {
  const auto e = nn::sinusoidal_embedding<double>(37.0, 8);
  REQUIRE(e.size() == 8);
  for (int i = 0; i < 8; ++i) CHECK(std::abs(e(i)) <= 1.0);
  CHECK(e(0) == doctest::Approx(std::sin(37.0)));
  CHECK(e(1) == doctest::Approx(std::cos(37.0)));
  // Odd dimensions zero-pad the tail slot.
  const auto odd = nn::sinusoidal_embedding<double>(2.0, 7);
  CHECK(odd(6) == 0.0);
}

TEST_CASE("denoiser forward is deterministic with shape-preserving output") {
  Rng rng(15);
  DenoiserModel<float> model(tiny_config(), default_vocab(), rng);
  Grid<float> z(6, 8, 1);
  Rng noise(1);
  noise.fill_normal(z.plane(0));

  const Grid<float> a = model.predict_noise(z, 2, defect_prompt("surface-A"));
  const Grid<float> b = model.predict_noise(z, 2, defect_prompt("surface-A"));
  CHECK(bitwise_equal(a, b));
  CHECK(a.rows() == z.rows());
  CHECK(a.cols() == z.cols());
  CHECK(a.channels() == z.channels());
  CHECK(a.all_finite());

  // Freshly initialized models stay within a small output range on zeros.
  const Grid<float> on_zero =
      model.predict_noise(Grid<float>(6, 8, 1), 1, null_prompt());
  CHECK(std::abs(on_zero.max_value()) < 10.0f);
  CHECK(std::abs(on_zero.min_value()) < 10.0f);

  CHECK_THROWS_AS(model.predict_noise(Grid<float>(5, 8, 1), 1, null_prompt()),
                  ShapeError);
}

}  // TEST_SUITE
