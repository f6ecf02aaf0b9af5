#pragma once

#include "defectgen/core/grid.hpp"
#include "defectgen/core/mask.hpp"

namespace defectgen::blend {

enum class PoissonSolver { Auto, Direct, ConjugateGradient };

struct PoissonOptions {
  PoissonSolver solver = PoissonSolver::Auto;
  double tol = 1e-6;      // relative residual for the iterative solver
  long max_iters = 10000;
  long direct_limit = 10000;  // Auto: direct solve up to this many unknowns
};

struct PoissonStats {
  long interior = 0;
  long iterations = 0;     // max over channels (0 for direct solves)
  long clamp_events = 0;
  bool border_shrunk = false;
  double residual = 0.0;   // worst relative residual across channels
};

// Removes mask pixels on the outermost rows/columns (the discrete Laplacian
// needs all four neighbours). Returns true if anything was cleared.
bool shrink_mask_from_border(Mask& mask);

// Gradient-domain composite: solves, per channel,
//   4 f_p - sum_{q in N4 ^ interior} f_q
//     = sum_{q in N4} (s_p - s_q) + sum_{q in N4 \ interior} t_q
// over interior (mask) pixels, keeping target values elsewhere. The result
// matches the source's gradients inside the mask and the target's values on
// the boundary. Output clamped to [0,1]; clamp events are counted.
Image poisson_blend(const Image& source, const Image& target, const Mask& mask,
                    const PoissonOptions& opt = {}, PoissonStats* stats = nullptr);

}  // namespace defectgen::blend
