#pragma once

#include <cmath>
#include <vector>

#include "defectgen/core/grid.hpp"
#include "defectgen/nn/layers.hpp"

namespace defectgen::nn {

// Adam over a flat list of parameter views. beta1 = 0 degrades to a
// momentum-free adaptive update (used for the embedding optimisation, where a
// single vector is trained and momentum mostly fights the masked gradients).
template <typename S>
class Adam {
 public:
  Adam(std::vector<ParamView<S>> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.push_back(Mat<S>::Zero(p.w->rows(), p.w->cols()));
      v_.push_back(Mat<S>::Zero(p.w->rows(), p.w->cols()));
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  // Applies one update from the accumulated gradients and clears them.
  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& w = *params_[i].w;
      auto& g = *params_[i].g;
      m_[i] = static_cast<S>(b1_) * m_[i] + static_cast<S>(1.0 - b1_) * g;
      v_[i] = (static_cast<S>(b2_) * v_[i].array() +
               static_cast<S>(1.0 - b2_) * g.array().square())
                  .matrix();
      const auto mhat = (m_[i].array() / static_cast<S>(bc1)).eval();
      const auto vhat = (v_[i].array() / static_cast<S>(bc2)).eval();
      w.array() -= static_cast<S>(lr_) * mhat / (vhat.sqrt() + static_cast<S>(eps_));
      g.setZero();
    }
  }

  // Global L2 norm of the accumulated gradients (pre-step diagnostics).
  double grad_norm() const {
    double s = 0;
    for (const auto& p : params_)
      s += p.g->template cast<double>().squaredNorm();
    return std::sqrt(s);
  }

 private:
  std::vector<ParamView<S>> params_;
  double lr_;
  double b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Mat<S>> m_;
  std::vector<Mat<S>> v_;
};

}  // namespace defectgen::nn
