#pragma once

#include <Eigen/Core>

#include <cmath>
#include <vector>

#include "defectgen/core/errors.hpp"

namespace defectgen {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Channel-planar raster grid. Each plane is a rows x cols Eigen array;
// pixel (x, y) of channel c is plane(c)(y, x). Images hold values in [0,1],
// latents are unbounded.
template <typename Scalar>
class Grid {
 public:
  using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Grid() = default;
  Grid(Eigen::Index rows, Eigen::Index cols, int channels)
      : planes_(static_cast<std::size_t>(channels), Plane::Zero(rows, cols)) {
    if (rows <= 0 || cols <= 0 || channels <= 0)
      throw ShapeError("grid dimensions must be positive");
  }

  static Grid constant(Eigen::Index rows, Eigen::Index cols, int channels, Scalar v) {
    Grid g(rows, cols, channels);
    for (auto& p : g.planes_) p.setConstant(v);
    return g;
  }

  Eigen::Index rows() const { return planes_.empty() ? 0 : planes_[0].rows(); }
  Eigen::Index cols() const { return planes_.empty() ? 0 : planes_[0].cols(); }
  int channels() const { return static_cast<int>(planes_.size()); }
  Eigen::Index size() const { return rows() * cols() * channels(); }
  bool empty() const { return planes_.empty(); }

  Plane& plane(int c) { return planes_[static_cast<std::size_t>(c)]; }
  const Plane& plane(int c) const { return planes_[static_cast<std::size_t>(c)]; }

  bool same_shape(const Grid& o) const {
    return rows() == o.rows() && cols() == o.cols() && channels() == o.channels();
  }

  bool all_finite() const {
    for (const auto& p : planes_)
      if (!p.isFinite().all()) return false;
    return true;
  }

  Scalar min_value() const {
    Scalar m = planes_[0](0, 0);
    for (const auto& p : planes_) m = std::min(m, p.minCoeff());
    return m;
  }
  Scalar max_value() const {
    Scalar m = planes_[0](0, 0);
    for (const auto& p : planes_) m = std::max(m, p.maxCoeff());
    return m;
  }
  double mean() const {
    double s = 0;
    for (const auto& p : planes_) s += p.template cast<double>().sum();
    return s / static_cast<double>(size());
  }

  void clamp(Scalar lo, Scalar hi) {
    for (auto& p : planes_) p = p.max(lo).min(hi);
  }

  template <typename T>
  Grid<T> cast() const {
    Grid<T> out(rows(), cols(), channels());
    for (int c = 0; c < channels(); ++c)
      out.plane(c) = plane(c).template cast<T>();
    return out;
  }

 private:
  std::vector<Plane> planes_;
};

using Image = Grid<float>;

template <typename S>
void require_same_shape(const Grid<S>& a, const Grid<S>& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string("shape mismatch in ") + what);
}

template <typename S>
double linf_diff(const Grid<S>& a, const Grid<S>& b) {
  double m = 0;
  for (int c = 0; c < a.channels(); ++c)
    m = std::max(m, (a.plane(c) - b.plane(c)).abs().template cast<double>().maxCoeff());
  return m;
}

template <typename S>
bool bitwise_equal(const Grid<S>& a, const Grid<S>& b) {
  if (!a.same_shape(b)) return false;
  for (int c = 0; c < a.channels(); ++c)
    if ((a.plane(c) != b.plane(c)).any()) return false;
  return true;
}

}  // namespace defectgen
