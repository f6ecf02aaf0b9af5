#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/grid.hpp"
#include "defectgen/core/log.hpp"
#include "defectgen/core/mask.hpp"
#include "defectgen/core/rng.hpp"
#include "defectgen/diffusion/autoencoder.hpp"
#include "defectgen/diffusion/model.hpp"
#include "defectgen/diffusion/sampler.hpp"
#include "defectgen/diffusion/schedule.hpp"
#include "defectgen/diffusion/train.hpp"
#include "defectgen/nn/optim.hpp"

namespace defectgen::inversion {

using defectgen::diffusion::Autoencoder;
using defectgen::diffusion::DenoiserModel;
using defectgen::diffusion::NoiseSchedule;
using defectgen::diffusion::Prompt;

// Mean-squared noise error restricted to mask-covered cells, normalized by
// (channel count x nonzero cells) so magnitudes are comparable across defect
// sizes.
template <typename S>
double masked_loss(const Grid<S>& eps, const Grid<S>& eps_hat, const Mask& m) {
  require_same_shape(eps, eps_hat, "masked_loss");
  if (m.rows() != eps.rows() || m.cols() != eps.cols())
    throw ShapeError("masked_loss: mask shape mismatch");
  const long nnz = mask_count(m);
  if (nnz == 0) throw DataError("empty defect mask");
  double s = 0;
  const auto mf = m.cast<double>();
  for (int c = 0; c < eps.channels(); ++c)
    s += (mf * (eps.plane(c).template cast<double>() -
                eps_hat.plane(c).template cast<double>())
                   .square())
             .sum();
  return s / (static_cast<double>(eps.channels()) * static_cast<double>(nnz));
}

// d masked_loss / d eps_hat.
template <typename S>
Grid<S> masked_loss_grad(const Grid<S>& eps, const Grid<S>& eps_hat,
                         const Mask& m) {
  require_same_shape(eps, eps_hat, "masked_loss");
  if (m.rows() != eps.rows() || m.cols() != eps.cols())
    throw ShapeError("masked_loss: mask shape mismatch");
  const long nnz = mask_count(m);
  if (nnz == 0) throw DataError("empty defect mask");
  const S scale =
      static_cast<S>(2.0 / (static_cast<double>(eps.channels()) * nnz));
  const auto mf = m.cast<S>();
  Grid<S> g(eps.rows(), eps.cols(), eps.channels());
  for (int c = 0; c < eps.channels(); ++c)
    g.plane(c) = scale * mf * (eps_hat.plane(c) - eps.plane(c));
  return g;
}

template <typename S>
struct Reference {
  Grid<S> image;
  Mask mask;
};

template <typename S>
struct ReferenceSet {
  std::vector<Reference<S>> refs;
  Prompt prompt;  // must contain exactly one "<s*>"
};

// Pairwise mask IoU after aligning centroids; used only for the
// morphological-similarity advisory.
inline double centroid_aligned_iou(const Mask& a, const Mask& b) {
  auto centroid = [](const Mask& m, double& cy, double& cx) {
    double sy = 0, sx = 0;
    long n = 0;
    for (Eigen::Index y = 0; y < m.rows(); ++y)
      for (Eigen::Index x = 0; x < m.cols(); ++x)
        if (m(y, x)) {
          sy += static_cast<double>(y);
          sx += static_cast<double>(x);
          ++n;
        }
    cy = sy / static_cast<double>(n);
    cx = sx / static_cast<double>(n);
  };
  double ay, ax, by, bx;
  centroid(a, ay, ax);
  centroid(b, by, bx);
  const long dy = static_cast<long>(std::llround(ay - by));
  const long dx = static_cast<long>(std::llround(ax - bx));
  long inter = 0, uni = 0;
  for (Eigen::Index y = 0; y < a.rows(); ++y)
    for (Eigen::Index x = 0; x < a.cols(); ++x) {
      const bool av = a(y, x) != 0;
      const long yb = y - dy, xb = x - dx;
      const bool bv = yb >= 0 && yb < b.rows() && xb >= 0 && xb < b.cols() &&
                      b(yb, xb) != 0;
      inter += (av && bv) ? 1 : 0;
      uni += (av || bv) ? 1 : 0;
    }
  // Count b pixels that map outside a's frame as union-only.
  for (Eigen::Index y = 0; y < b.rows(); ++y)
    for (Eigen::Index x = 0; x < b.cols(); ++x)
      if (b(y, x)) {
        const long ya = y + dy, xa = x + dx;
        if (ya < 0 || ya >= a.rows() || xa < 0 || xa >= a.cols()) ++uni;
      }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

template <typename S>
void validate_reference_set(const ReferenceSet<S>& rs) {
  const auto n = rs.refs.size();
  if (n < 3 || n > 5)
    throw DataError("reference count must be in [3,5] (as few as three, "
                    "at most five); got " +
                    std::to_string(n));
  int placeholders = 0;
  for (const auto& w : rs.prompt)
    if (w == diffusion::kPlaceholderToken) ++placeholders;
  if (placeholders != 1)
    throw ParamError("reference prompt must contain exactly one <s*> slot");
  for (const auto& r : rs.refs) {
    if (r.mask.rows() != r.image.rows() || r.mask.cols() != r.image.cols())
      throw ShapeError("reference image/mask shapes differ");
    require_binary(r.mask);
    if (mask_count(r.mask) == 0) throw DataError("empty defect mask in reference");
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double iou = centroid_aligned_iou(rs.refs[i].mask, rs.refs[j].mask);
      if (iou < 0.2)
        log_warn("references " + std::to_string(i) + " and " + std::to_string(j) +
                 " are morphologically dissimilar (centroid-aligned mask IoU " +
                 std::to_string(iou) + " < 0.2)");
    }
}

// Replaces pixels outside the (optionally dilated) mask with a neutral 0.5
// before encoding, so nothing outside the defect region can reach the model.
template <typename S>
Grid<S> mask_to_neutral(const Grid<S>& img, const Mask& m, int dilation) {
  const Mask mm = dilation > 0 ? dilate_mask(m, dilation) : m;
  const auto mf = mm.cast<S>();
  Grid<S> out(img.rows(), img.cols(), img.channels());
  for (int c = 0; c < img.channels(); ++c)
    out.plane(c) = mf * img.plane(c) + (S(1) - mf) * S(0.5);
  return out;
}

struct InversionOptions {
  int steps = 2000;
  double lr = 5e-3;
  std::string init_word = "defect";  // v starts at this vocabulary embedding
  double beta1 = 0.0;                // momentum-free adaptive update
  int context_dilation = 0;          // mask dilation for the input masking
  int log_every = 0;
};

template <typename S>
struct InversionResult {
  Vec<S> v;
  std::vector<double> trace;
};

// Optimizes only the concept vector v against the masked denoising loss; the
// model and autoencoder stay frozen. RNG draw order per step: reference
// index, t, noise field.
template <typename S>
InversionResult<S> learn_concept(DenoiserModel<S>& model, const Autoencoder<S>& ae,
                                 const ReferenceSet<S>& rs,
                                 const NoiseSchedule& sched,
                                 const InversionOptions& opt, std::uint64_t seed) {
  validate_reference_set(rs);
  if (opt.steps < 0) throw ParamError("negative step count");

  std::vector<Grid<S>> latents;
  std::vector<Mask> lat_masks;
  latents.reserve(rs.refs.size());
  lat_masks.reserve(rs.refs.size());
  for (const auto& r : rs.refs) {
    latents.push_back(ae.encode(mask_to_neutral(r.image, r.mask, opt.context_dilation)));
    lat_masks.push_back(downsample_mask(r.mask, ae.factor()));
  }

  Mat<S> v(model.cfg.token_dim, 1);
  v.col(0) = model.text.table.row(model.text.token_id(opt.init_word)).transpose();
  Mat<S> gv = Mat<S>::Zero(v.rows(), 1);
  nn::Adam<S> optim({{"v", &v, &gv}}, opt.lr, opt.beta1);

  Rng rng(seed);
  InversionResult<S> result;
  result.trace.reserve(opt.steps);

  for (int step = 0; step < opt.steps; ++step) {
    const auto idx = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<long>(rs.refs.size()) - 1));
    const int t = static_cast<int>(rng.uniform_int(1, sched.T));
    const Grid<S>& z0 = latents[idx];
    Grid<S> eps = diffusion::normal_like(z0, rng);
    Grid<S> z_t = diffusion::forward_diffuse(z0, t, eps, sched);

    const Vec<S> vv = v.col(0);
    Mat<S> tokens = model.text.encode(rs.prompt, &vv);
    Mat<S> zmat = nn::grid_to_mat(z_t);
    typename diffusion::UNet<S>::Acts acts;
    Mat<S> eps_hat =
        model.unet.forward(zmat, z0.rows(), z0.cols(), t, tokens, &acts);

    Grid<S> eps_hat_grid = nn::mat_to_grid(eps_hat, z0.rows(), z0.cols());
    const double loss = masked_loss(eps, eps_hat_grid, lat_masks[idx]);
    if (!std::isfinite(loss))
      throw NumericError("non-finite inversion loss at step " +
                         std::to_string(step));

    Grid<S> g = masked_loss_grad(eps, eps_hat_grid, lat_masks[idx]);
    Mat<S> gtokens = Mat<S>::Zero(tokens.rows(), tokens.cols());
    model.unet.backward(acts, nn::grid_to_mat(g), &gtokens,
                        /*param_grads=*/false);
    Vec<S> gvv = Vec<S>::Zero(v.rows());
    model.text.accumulate_grads(rs.prompt, gtokens, &gvv, /*table_grads=*/false);
    gv.col(0) = gvv;

    optim.step();
    result.trace.push_back(loss);
    if (opt.log_every > 0 && (step + 1) % opt.log_every == 0)
      log_info("inversion step " + std::to_string(step + 1) + "/" +
               std::to_string(opt.steps) + " loss " + std::to_string(loss));
  }
  result.v = v.col(0);
  return result;
}

}  // namespace defectgen::inversion
