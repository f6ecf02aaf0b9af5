#pragma once

#include <cmath>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/grid.hpp"
#include "defectgen/core/rng.hpp"
#include "defectgen/diffusion/schedule.hpp"

namespace defectgen::diffusion {

template <typename S>
Grid<S> normal_like(const Grid<S>& g, Rng& rng) {
  Grid<S> out(g.rows(), g.cols(), g.channels());
  for (int c = 0; c < out.channels(); ++c) rng.fill_normal(out.plane(c));
  return out;
}

// eps_uncond + s * (eps_cond - eps_uncond).
template <typename S>
Grid<S> cfg_combine(const Grid<S>& eps_uncond, const Grid<S>& eps_cond, double s) {
  require_same_shape(eps_uncond, eps_cond, "cfg_combine");
  if (s < 0) throw ParamError("guidance scale must be >= 0");
  Grid<S> out(eps_uncond.rows(), eps_uncond.cols(), eps_uncond.channels());
  const S sv = static_cast<S>(s);
  for (int c = 0; c < out.channels(); ++c)
    out.plane(c) =
        eps_uncond.plane(c) + sv * (eps_cond.plane(c) - eps_uncond.plane(c));
  return out;
}

// Coefficients of the DDPM posterior q(z_{t-1} | z_t, x0):
// mean = c_clean * x0_hat + c_noisy * z_t, stddev sigma (0 at t = 1).
struct PosteriorCoeffs {
  double c_clean;
  double c_noisy;
  double sigma;
};

inline PosteriorCoeffs posterior_coeffs(int t, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.T) throw ParamError("reverse step index out of range");
  const double beta = sched.beta_at(t);
  const double alpha = 1.0 - beta;
  const double abar_t = sched.alpha_bar_at(t);
  const double abar_prev = sched.alpha_bar_at(t - 1);
  const double denom = 1.0 - abar_t;
  if (denom <= 0.0) {
    // Degenerate (zero-noise test schedule): z_t == x0 already.
    return {1.0, 0.0, 0.0};
  }
  PosteriorCoeffs pc;
  pc.c_clean = std::sqrt(abar_prev) * beta / denom;
  pc.c_noisy = std::sqrt(alpha) * (1.0 - abar_prev) / denom;
  pc.sigma = (t == 1) ? 0.0 : std::sqrt(beta * (1.0 - abar_prev) / denom);
  return pc;
}

// One ancestral step given an already-computed noise estimate. Draws the
// stochastic term from rng only when t > 1, so the final step is
// deterministic and the draw count per step is fixed.
template <typename S>
Grid<S> reverse_step_from_eps(const Grid<S>& z_t, int t, const Grid<S>& eps_hat,
                              const NoiseSchedule& sched, Rng& rng) {
  require_same_shape(z_t, eps_hat, "reverse_step");
  const PosteriorCoeffs pc = posterior_coeffs(t, sched);
  Grid<S> x0 = predict_clean(z_t, t, eps_hat, sched);
  Grid<S> out(z_t.rows(), z_t.cols(), z_t.channels());
  const S a = static_cast<S>(pc.c_clean);
  const S b = static_cast<S>(pc.c_noisy);
  for (int c = 0; c < out.channels(); ++c)
    out.plane(c) = a * x0.plane(c) + b * z_t.plane(c);
  if (t > 1 && pc.sigma > 0.0) {
    Grid<S> xi = normal_like(z_t, rng);
    const S sg = static_cast<S>(pc.sigma);
    for (int c = 0; c < out.channels(); ++c) out.plane(c) += sg * xi.plane(c);
  }
  return out;
}

// Model-in-the-loop variant: eps_fn(z_t, t) -> noise estimate (already
// guidance-combined by the caller if desired).
template <typename S, typename EpsFn>
Grid<S> reverse_step(EpsFn&& eps_fn, const Grid<S>& z_t, int t,
                     const NoiseSchedule& sched, Rng& rng) {
  Grid<S> eps_hat = eps_fn(z_t, t);
  return reverse_step_from_eps(z_t, t, eps_hat, sched, rng);
}

}  // namespace defectgen::diffusion
