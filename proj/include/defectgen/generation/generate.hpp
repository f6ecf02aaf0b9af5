#pragma once

#include <string>
#include <utility>

#include "json.hpp"

#include "defectgen/core/errors.hpp"
#include "defectgen/core/grid.hpp"
#include "defectgen/core/mask.hpp"
#include "defectgen/core/rng.hpp"
#include "defectgen/diffusion/autoencoder.hpp"
#include "defectgen/diffusion/model.hpp"
#include "defectgen/diffusion/sampler.hpp"
#include "defectgen/diffusion/schedule.hpp"
#include "defectgen/inversion/embedding_io.hpp"

namespace defectgen::generation {

using defectgen::diffusion::Autoencoder;
using defectgen::diffusion::DenoiserModel;
using defectgen::diffusion::NoiseSchedule;
using defectgen::diffusion::Prompt;

struct GuidanceSchedule {
  double s_start = 1.0;
  double s_end = 7.5;
  int T = 0;
};

// Linear ramp from s_start (at t = T) to s_end (at t = 1); guidance grows as
// denoising proceeds.
inline double guidance_scale_at(int t, const GuidanceSchedule& gs) {
  if (t < 1 || t > gs.T) throw ParamError("guidance step index out of range");
  if (gs.T == 1) return gs.s_end;
  return gs.s_start +
         (gs.s_end - gs.s_start) * static_cast<double>(gs.T - t) /
             static_cast<double>(gs.T - 1);
}

// One noise-blended reverse step:
//   x_{t-1} = m_bg (.) q(x_{t-1} | x_0)  +  (1 - m_bg) (.) p_theta(x_{t-1} | x_t)
// m_bg marks cells to keep anchored to the background. The guided estimate is
// supplied by eps_fn so stub models can drive the step in tests. Draw order
// per step is fixed: the reverse step's noise first, then the fresh q-noise;
// neither branch consults the model for its draws, so background cells are
// independent of the conditioning by construction.
template <typename S, typename EpsFn>
Grid<S> blended_reverse_step_with(EpsFn&& eps_fn, const Grid<S>& x_t, int t,
                                  const Grid<S>& x0_bg, const Mask& m_bg,
                                  const NoiseSchedule& sched, Rng& rng) {
  require_same_shape(x_t, x0_bg, "blended_reverse_step");
  if (m_bg.rows() != x_t.rows() || m_bg.cols() != x_t.cols())
    throw ShapeError("blended_reverse_step: mask shape mismatch");
  Grid<S> eps_hat = eps_fn(x_t, t);
  Grid<S> p = diffusion::reverse_step_from_eps(x_t, t, eps_hat, sched, rng);
  Grid<S> q = x0_bg;
  if (t > 1) {
    Grid<S> qn = diffusion::normal_like(x_t, rng);
    q = diffusion::forward_diffuse(x0_bg, t - 1, qn, sched);
  }
  const auto mf = m_bg.cast<S>();
  Grid<S> out(x_t.rows(), x_t.cols(), x_t.channels());
  for (int c = 0; c < out.channels(); ++c)
    out.plane(c) = mf * q.plane(c) + (S(1) - mf) * p.plane(c);
  return out;
}

// Model-driven variant with the dynamic CFG ramp.
template <typename S>
Grid<S> blended_reverse_step(const Grid<S>& x_t, int t, const Grid<S>& x0_bg,
                             const Mask& m_bg, const DenoiserModel<S>& model,
                             const Vec<S>& concept_v, const Prompt& prompt,
                             const NoiseSchedule& sched,
                             const GuidanceSchedule& gs, Rng& rng) {
  auto eps_fn = [&](const Grid<S>& z, int tt) {
    Grid<S> eps_u = model.predict_noise(z, tt, diffusion::null_prompt());
    Grid<S> eps_c = model.predict_noise(z, tt, prompt, &concept_v);
    return diffusion::cfg_combine(eps_u, eps_c, guidance_scale_at(tt, gs));
  };
  return blended_reverse_step_with(eps_fn, x_t, t, x0_bg, m_bg, sched, rng);
}

struct GenerationRequest {
  Image background;
  Mask defect_mask;           // 1 = region to synthesize
  inversion::ConceptEmbedding embedding;
  Prompt prompt;              // template carrying the <s*> slot
  std::uint64_t seed = 0;
  double s_start = 1.0;
  double s_end = 7.5;
  int blend_dilation = 0;     // widen the blend window around thin masks (0-3)
};

struct SynthesisResult {
  Image image;
  Mask mask;       // copy of the request mask
  PixelBox bbox;   // tight inclusive box of the mask
  nlohmann::json provenance;
};

// Full Eq.-3 sampling loop: unit-normal init at t = T, blended steps down to
// t = 1 at the diffusion operating resolution, decode, and a final pixel-space
// hard composite that pins every non-mask pixel to the background exactly.
inline SynthesisResult generate_defect(const GenerationRequest& req,
                                       const DenoiserModel<float>& model,
                                       const Autoencoder<float>& ae,
                                       const NoiseSchedule& sched) {
  if (req.background.rows() != req.defect_mask.rows() ||
      req.background.cols() != req.defect_mask.cols())
    throw ShapeError("generation: background/mask shape mismatch");
  if (mask_empty(req.defect_mask)) throw ParamError("generation: empty defect mask");
  if (req.s_start > req.s_end)
    throw ParamError("generation: s_start must be <= s_end");
  if (req.embedding.v.size() != model.cfg.token_dim)
    throw ParamError("generation: embedding dimension does not match the model");
  if (req.blend_dilation < 0 || req.blend_dilation > 3)
    throw ParamError("generation: blend dilation must be in [0,3]");

  const Mask blend_mask = req.blend_dilation > 0
                              ? dilate_mask(req.defect_mask, req.blend_dilation)
                              : req.defect_mask;
  // The background-keep mask: complement of the defect mask, computed once
  // here and nowhere else, at the operating resolution.
  Mask m_bg_op = Mask::Constant(blend_mask.rows() / ae.factor(),
                                blend_mask.cols() / ae.factor(), 1);
  {
    const Mask lat = downsample_mask(blend_mask, ae.factor());
    for (Eigen::Index y = 0; y < lat.rows(); ++y)
      for (Eigen::Index x = 0; x < lat.cols(); ++x)
        m_bg_op(y, x) = lat(y, x) ? 0 : 1;
  }

  const Grid<float> z_bg = ae.encode(req.background);
  GuidanceSchedule gs{req.s_start, req.s_end, sched.T};
  const Vec<float> v = req.embedding.v;

  Rng rng(req.seed);
  Grid<float> x = diffusion::normal_like(z_bg, rng);
  for (int t = sched.T; t >= 1; --t)
    x = blended_reverse_step(x, t, z_bg, m_bg_op, model, v, req.prompt, sched,
                             gs, rng);

  Grid<float> gen = ae.decode(x);
  gen.clamp(0.0f, 1.0f);

  SynthesisResult res;
  res.image = Image(req.background.rows(), req.background.cols(),
                    req.background.channels());
  const auto mf = req.defect_mask.cast<float>();
  for (int c = 0; c < res.image.channels(); ++c)
    res.image.plane(c) =
        mf * gen.plane(c) + (1.0f - mf) * req.background.plane(c);
  res.mask = req.defect_mask;
  res.bbox = derive_bbox(req.defect_mask);
  res.provenance = {{"token", req.embedding.name},
                    {"seed", req.seed},
                    {"schedule", {{"T", sched.T},
                                  {"s_start", req.s_start},
                                  {"s_end", req.s_end}}}};
  return res;
}

}  // namespace defectgen::generation
