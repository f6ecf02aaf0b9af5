#include "defectgen/blend/poisson.hpp"

#include <Eigen/Sparse>
#include <cmath>
#include <string>
#include <vector>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/log.hpp"

namespace defectgen::blend {

namespace {

constexpr int kDy[4] = {-1, 1, 0, 0};
constexpr int kDx[4] = {0, 0, -1, 1};

// Jacobi-preconditioned conjugate gradient for the SPD Poisson system.
// Returns iterations used; throws on non-convergence.
long solve_pcg(const Eigen::SparseMatrix<double>& A, const Eigen::VectorXd& b,
               Eigen::VectorXd& x, double tol, long max_iters, double* out_rel) {
  const double bnorm = b.norm();
  x = Eigen::VectorXd::Zero(b.size());
  if (bnorm == 0.0) {
    if (out_rel) *out_rel = 0.0;
    return 0;
  }
  Eigen::VectorXd diag = A.diagonal();
  Eigen::VectorXd r = b;
  Eigen::VectorXd z = r.cwiseQuotient(diag);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  double rel = r.norm() / bnorm;
  long it = 0;
  while (rel > tol && it < max_iters) {
    const Eigen::VectorXd Ap = A * p;
    const double alpha = rz / p.dot(Ap);
    x += alpha * p;
    r -= alpha * Ap;
    rel = r.norm() / bnorm;
    if (rel <= tol) {
      ++it;
      break;
    }
    z = r.cwiseQuotient(diag);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
    ++it;
  }
  if (rel > tol)
    throw NumericError("Poisson CG did not converge within " +
                       std::to_string(max_iters) +
                       " iterations (relative residual " + std::to_string(rel) +
                       ")");
  if (out_rel) *out_rel = rel;
  return it;
}

}  // namespace

bool shrink_mask_from_border(Mask& mask) {
  bool changed = false;
  const auto rows = mask.rows(), cols = mask.cols();
  for (Eigen::Index x = 0; x < cols; ++x) {
    if (mask(0, x)) {
      mask(0, x) = 0;
      changed = true;
    }
    if (mask(rows - 1, x)) {
      mask(rows - 1, x) = 0;
      changed = true;
    }
  }
  for (Eigen::Index y = 0; y < rows; ++y) {
    if (mask(y, 0)) {
      mask(y, 0) = 0;
      changed = true;
    }
    if (mask(y, cols - 1)) {
      mask(y, cols - 1) = 0;
      changed = true;
    }
  }
  return changed;
}

Image poisson_blend(const Image& source, const Image& target, const Mask& mask,
                    const PoissonOptions& opt, PoissonStats* stats) {
  require_same_shape(source, target, "poisson_blend");
  if (mask.rows() != source.rows() || mask.cols() != source.cols())
    throw ShapeError("poisson_blend: mask shape mismatch");
  require_binary(mask);

  PoissonStats local;
  PoissonStats& st = stats ? *stats : local;

  Mask interior = mask;
  if (shrink_mask_from_border(interior)) {
    log_warn("poisson_blend: mask touched the image border; shrunk by 1 px");
    st.border_shrunk = true;
  }

  const auto rows = interior.rows(), cols = interior.cols();
  std::vector<long> index(static_cast<std::size_t>(rows) * cols, -1);
  std::vector<std::pair<int, int>> cells;  // (y, x) per unknown
  for (Eigen::Index x = 0; x < cols; ++x)
    for (Eigen::Index y = 0; y < rows; ++y)
      if (interior(y, x)) {
        index[static_cast<std::size_t>(x) * rows + y] =
            static_cast<long>(cells.size());
        cells.emplace_back(static_cast<int>(y), static_cast<int>(x));
      }
  const long n = static_cast<long>(cells.size());
  st.interior = n;
  if (n == 0) return target;

  Eigen::SparseMatrix<double> A(n, n);
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(n) * 5);
    for (long i = 0; i < n; ++i) {
      const auto [y, x] = cells[static_cast<std::size_t>(i)];
      trips.emplace_back(i, i, 4.0);
      for (int k = 0; k < 4; ++k) {
        const long j =
            index[static_cast<std::size_t>(x + kDx[k]) * rows + (y + kDy[k])];
        if (j >= 0) trips.emplace_back(i, j, -1.0);
      }
    }
    A.setFromTriplets(trips.begin(), trips.end());
  }

  const bool direct =
      opt.solver == PoissonSolver::Direct ||
      (opt.solver == PoissonSolver::Auto && n <= opt.direct_limit);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  if (direct) {
    ldlt.compute(A);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("Poisson direct factorization failed");
  }

  Image out = target;
  for (int c = 0; c < source.channels(); ++c) {
    const auto& s = source.plane(c);
    const auto& t = target.plane(c);
    Eigen::VectorXd b(n);
    for (long i = 0; i < n; ++i) {
      const auto [y, x] = cells[static_cast<std::size_t>(i)];
      double acc = 0;
      for (int k = 0; k < 4; ++k) {
        const int yq = y + kDy[k], xq = x + kDx[k];
        acc += static_cast<double>(s(y, x)) - static_cast<double>(s(yq, xq));
        if (index[static_cast<std::size_t>(xq) * rows + yq] < 0)
          acc += static_cast<double>(t(yq, xq));
      }
      b(i) = acc;
    }

    Eigen::VectorXd f;
    if (direct) {
      f = ldlt.solve(b);
      if (ldlt.info() != Eigen::Success)
        throw NumericError("Poisson direct solve failed");
      const double bnorm = b.norm();
      const double rel = bnorm == 0.0 ? 0.0 : (A * f - b).norm() / bnorm;
      st.residual = std::max(st.residual, rel);
    } else {
      double rel = 0.0;
      const long it = solve_pcg(A, b, f, opt.tol, opt.max_iters, &rel);
      st.iterations = std::max(st.iterations, it);
      st.residual = std::max(st.residual, rel);
    }

    auto& o = out.plane(c);
    for (long i = 0; i < n; ++i) {
      const auto [y, x] = cells[static_cast<std::size_t>(i)];
      double v = f(i);
      if (v < 0.0 || v > 1.0) {
        ++st.clamp_events;
        v = std::min(1.0, std::max(0.0, v));
      }
      o(y, x) = static_cast<float>(v);
    }
  }
  if (st.clamp_events > 0)
    log_info("poisson_blend: clamped " + std::to_string(st.clamp_events) +
             " solution values into [0,1]");
  return out;
}

}  // namespace defectgen::blend
