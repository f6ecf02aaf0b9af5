#pragma once

#include <Eigen/Core>

#include <cmath>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/grid.hpp"

namespace defectgen::diffusion {

enum class ScheduleShape { Linear };

// Per-step variance table for the forward process and the cumulative
// signal-retention products derived from it. Index convention: step t runs
// 1..T, stored at t-1; alpha_bar_at(0) == 1.
struct NoiseSchedule {
  int T = 0;
  Eigen::ArrayXd beta;
  Eigen::ArrayXd alpha_bar;

  double beta_at(int t) const {
    if (t < 1 || t > T) throw ParamError("schedule step out of range");
    return beta(t - 1);
  }
  double alpha_bar_at(int t) const {
    if (t < 0 || t > T) throw ParamError("schedule step out of range");
    return t == 0 ? 1.0 : alpha_bar(t - 1);
  }
};

inline NoiseSchedule build_schedule(int T, double beta_min, double beta_max,
                                    ScheduleShape shape = ScheduleShape::Linear) {
  (void)shape;  // only the linear shape exists
  if (T < 1) throw ParamError("schedule length T must be >= 1");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0))
    throw ParamError("schedule requires 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (int i = 0; i < T; ++i) {
    const double frac = (T == 1) ? 0.0 : static_cast<double>(i) / (T - 1);
    s.beta(i) = beta_min + (beta_max - beta_min) * frac;
    prod *= 1.0 - s.beta(i);
    s.alpha_bar(i) = prod;
  }
  return s;
}

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps. Accepts t in [0, T]; t = 0
// returns z0 (used by the blend branch's q-draw at the final step).
template <typename S>
Grid<S> forward_diffuse(const Grid<S>& z0, int t, const Grid<S>& eps,
                        const NoiseSchedule& sched) {
  require_same_shape(z0, eps, "forward_diffuse");
  const double abar = sched.alpha_bar_at(t);
  const S a = static_cast<S>(std::sqrt(abar));
  const S b = static_cast<S>(std::sqrt(1.0 - abar));
  Grid<S> out(z0.rows(), z0.cols(), z0.channels());
  for (int c = 0; c < z0.channels(); ++c)
    out.plane(c) = a * z0.plane(c) + b * eps.plane(c);
  return out;
}

// Inverts the closed form: x0_hat = (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).
template <typename S>
Grid<S> predict_clean(const Grid<S>& z_t, int t, const Grid<S>& eps_hat,
                      const NoiseSchedule& sched) {
  require_same_shape(z_t, eps_hat, "predict_clean");
  const double abar = sched.alpha_bar_at(t);
  const S inv_a = static_cast<S>(1.0 / std::sqrt(abar));
  const S b = static_cast<S>(std::sqrt(1.0 - abar));
  Grid<S> out(z_t.rows(), z_t.cols(), z_t.channels());
  for (int c = 0; c < z_t.channels(); ++c)
    out.plane(c) = inv_a * (z_t.plane(c) - b * eps_hat.plane(c));
  return out;
}

}  // namespace defectgen::diffusion
