#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/grid.hpp"
#include "defectgen/core/rng.hpp"

// Minimal dense building blocks for the toy denoisers. Feature maps are
// (N x C) matrices: N = H*W spatial positions in column-major plane order
// (p = x*H + y), one column per channel. All forward passes are const;
// training passes cache intermediates in caller-owned activation structs.
namespace defectgen::nn {

using defectgen::Mat;
using defectgen::Vec;

template <typename S>
struct ParamView {
  std::string name;
  Mat<S>* w;
  Mat<S>* g;
};

template <typename S>
inline void he_uniform_init(Mat<S>& w, long fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      w(r, c) = static_cast<S>((rng.uniform() * 2.0 - 1.0) * limit);
}

// ---------------------------------------------------------------------------
// im2col / col2im

// x: (H*W x C), cols: (Ho*Wo x C*k*k) with column index (dy*k + dx)*C + c.
// pad = k/2, so k=3 keeps the spatial size at stride 1 and halves it at
// stride 2 (H and W must then be even).
template <typename S>
void im2col(const Mat<S>& x, int H, int W, int C, int k, int stride, Mat<S>& cols) {
  const int pad = k / 2;
  if (stride == 2 && (H % 2 || W % 2))
    throw ShapeError("stride-2 conv requires even spatial dimensions");
  const int Ho = (stride == 1) ? H : H / 2;
  const int Wo = (stride == 1) ? W : W / 2;
  cols.setZero(static_cast<long>(Ho) * Wo, static_cast<long>(C) * k * k);
  for (int dy = 0; dy < k; ++dy)
    for (int dx = 0; dx < k; ++dx)
      for (int c = 0; c < C; ++c) {
        const long r = (static_cast<long>(dy) * k + dx) * C + c;
        if (stride == 1) {
          const int yo0 = std::max(0, pad - dy);
          const int yo1 = std::min(H, H + pad - dy);  // exclusive
          const int len = yo1 - yo0;
          if (len <= 0) continue;
          for (int xo = 0; xo < Wo; ++xo) {
            const int xi = xo + dx - pad;
            if (xi < 0 || xi >= W) continue;
            cols.col(r).segment(static_cast<long>(xo) * Ho + yo0, len) =
                x.col(c).segment(static_cast<long>(xi) * H + yo0 + dy - pad, len);
          }
        } else {
          for (int xo = 0; xo < Wo; ++xo) {
            const int xi = xo * 2 + dx - pad;
            if (xi < 0 || xi >= W) continue;
            for (int yo = 0; yo < Ho; ++yo) {
              const int yi = yo * 2 + dy - pad;
              if (yi < 0 || yi >= H) continue;
              cols(static_cast<long>(xo) * Ho + yo, r) =
                  x(static_cast<long>(xi) * H + yi, c);
            }
          }
        }
      }
}

// Scatter-add transpose of im2col.
template <typename S>
void col2im(const Mat<S>& cols, int H, int W, int C, int k, int stride, Mat<S>& x) {
  const int pad = k / 2;
  const int Ho = (stride == 1) ? H : H / 2;
  const int Wo = (stride == 1) ? W : W / 2;
  x.setZero(static_cast<long>(H) * W, C);
  for (int dy = 0; dy < k; ++dy)
    for (int dx = 0; dx < k; ++dx)
      for (int c = 0; c < C; ++c) {
        const long r = (static_cast<long>(dy) * k + dx) * C + c;
        if (stride == 1) {
          const int yo0 = std::max(0, pad - dy);
          const int yo1 = std::min(H, H + pad - dy);
          const int len = yo1 - yo0;
          if (len <= 0) continue;
          for (int xo = 0; xo < Wo; ++xo) {
            const int xi = xo + dx - pad;
            if (xi < 0 || xi >= W) continue;
            x.col(c).segment(static_cast<long>(xi) * H + yo0 + dy - pad, len) +=
                cols.col(r).segment(static_cast<long>(xo) * Ho + yo0, len);
          }
        } else {
          for (int xo = 0; xo < Wo; ++xo) {
            const int xi = xo * 2 + dx - pad;
            if (xi < 0 || xi >= W) continue;
            for (int yo = 0; yo < Ho; ++yo) {
              const int yi = yo * 2 + dy - pad;
              if (yi < 0 || yi >= H) continue;
              x(static_cast<long>(xi) * H + yi, c) +=
                  cols(static_cast<long>(xo) * Ho + yo, r);
            }
          }
        }
      }
}

// ---------------------------------------------------------------------------
// Convolution

template <typename S>
struct Conv2d {
  int cin = 0, cout = 0, k = 3, stride = 1;
  Mat<S> W;   // cout x cin*k*k
  Mat<S> b;   // cout x 1
  Mat<S> gW;
  Mat<S> gb;

  void init(int cin_, int cout_, int k_, int stride_, Rng& rng) {
    cin = cin_;
    cout = cout_;
    k = k_;
    stride = stride_;
    W.resize(cout, static_cast<long>(cin) * k * k);
    he_uniform_init(W, static_cast<long>(cin) * k * k, rng);
    b = Mat<S>::Zero(cout, 1);
    gW = Mat<S>::Zero(W.rows(), W.cols());
    gb = Mat<S>::Zero(cout, 1);
  }

  // cols_cache may be null for inference; it must be kept for backward.
  Mat<S> forward(const Mat<S>& x, int H, int Wd, Mat<S>* cols_cache) const {
    Mat<S> out;
    if (k == 1) {
      out.noalias() = x * W.transpose();
    } else {
      Mat<S> local;
      Mat<S>& cols = cols_cache ? *cols_cache : local;
      im2col(x, H, Wd, cin, k, stride, cols);
      out.noalias() = cols * W.transpose();
    }
    out.rowwise() += b.col(0).transpose();
    return out;
  }

  // `x_or_cols` is the input x for k==1 and the cached im2col matrix
  // otherwise. Returns the input gradient when want_input is set.
  Mat<S> backward(const Mat<S>& x_or_cols, const Mat<S>& gout, int H, int Wd,
                  bool want_input, bool param_grads = true) {
    if (param_grads) {
      gW.noalias() += gout.transpose() * x_or_cols;
      gb.col(0).noalias() += gout.colwise().sum().transpose();
    }
    if (!want_input) return Mat<S>();
    if (k == 1) {
      Mat<S> gx;
      gx.noalias() = gout * W;
      return gx;
    }
    Mat<S> gcols;
    gcols.noalias() = gout * W;
    Mat<S> gx;
    col2im(gcols, H, Wd, cin, k, stride, gx);
    return gx;
  }
};

// ---------------------------------------------------------------------------
// Dense layer on vectors (time-embedding MLP and detector head).

template <typename S>
struct Dense {
  Mat<S> W;  // out x in
  Mat<S> b;  // out x 1
  Mat<S> gW;
  Mat<S> gb;

  void init(int in, int out, Rng& rng) {
    W.resize(out, in);
    he_uniform_init(W, in, rng);
    b = Mat<S>::Zero(out, 1);
    gW = Mat<S>::Zero(out, in);
    gb = Mat<S>::Zero(out, 1);
  }

  Vec<S> forward(const Vec<S>& x) const { return W * x + b.col(0); }

  Vec<S> backward(const Vec<S>& x, const Vec<S>& gout, bool param_grads = true) {
    if (param_grads) {
      gW.noalias() += gout * x.transpose();
      gb.col(0) += gout;
    }
    return W.transpose() * gout;
  }
};

// ---------------------------------------------------------------------------
// Activations

template <typename M>
inline M silu(const M& x) {
  using Sc = typename M::Scalar;
  return (x.array() / (Sc(1) + (-x.array()).exp())).matrix();
}

template <typename M>
inline M silu_backward(const M& x, const M& gout) {
  using Sc = typename M::Scalar;
  auto sig = (Sc(1) / (Sc(1) + (-x.array()).exp())).eval();
  return (gout.array() * sig * (Sc(1) + x.array() * (Sc(1) - sig))).matrix();
}

// Row-wise softmax of an (N x L) score matrix.
template <typename S>
inline Mat<S> softmax_rows(const Mat<S>& scores) {
  Mat<S> out = scores;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i).array();
    row -= row.maxCoeff();
    row = row.exp();
    row /= row.sum();
  }
  return out;
}

template <typename S>
inline Mat<S> softmax_rows_backward(const Mat<S>& probs, const Mat<S>& gout) {
  Mat<S> g = probs.cwiseProduct(gout);
  Vec<S> rowsum = g.rowwise().sum();
  return g - probs.cwiseProduct(rowsum.replicate(1, probs.cols()));
}

// ---------------------------------------------------------------------------
// Resampling

// Nearest-neighbour 2x upsample: (h*w x C) -> (2h*2w x C).
template <typename S>
Mat<S> upsample2(const Mat<S>& x, int h, int w) {
  const int H = 2 * h, W = 2 * w;
  Mat<S> out(static_cast<long>(H) * W, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    for (int xo = 0; xo < W; ++xo)
      for (int yo = 0; yo < H; ++yo)
        out(static_cast<long>(xo) * H + yo, c) =
            x(static_cast<long>(xo / 2) * h + yo / 2, c);
  return out;
}

template <typename S>
Mat<S> upsample2_backward(const Mat<S>& gout, int h, int w) {
  const int H = 2 * h;
  Mat<S> gin = Mat<S>::Zero(static_cast<long>(h) * w, gout.cols());
  for (Eigen::Index c = 0; c < gout.cols(); ++c)
    for (int xo = 0; xo < 2 * w; ++xo)
      for (int yo = 0; yo < H; ++yo)
        gin(static_cast<long>(xo / 2) * h + yo / 2, c) +=
            gout(static_cast<long>(xo) * H + yo, c);
  return gin;
}

// 2x2 mean pooling: (h*w x C) -> (h/2*w/2 x C). h and w must be even.
template <typename S>
Mat<S> avgpool2(const Mat<S>& x, int h, int w) {
  const int ho = h / 2, wo = w / 2;
  Mat<S> out(static_cast<long>(ho) * wo, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    for (int xo = 0; xo < wo; ++xo)
      for (int yo = 0; yo < ho; ++yo) {
        const long base = static_cast<long>(2 * xo) * h + 2 * yo;
        out(static_cast<long>(xo) * ho + yo, c) =
            static_cast<S>(0.25) * (x(base, c) + x(base + 1, c) + x(base + h, c) +
                                    x(base + h + 1, c));
      }
  return out;
}

template <typename S>
Mat<S> avgpool2_backward(const Mat<S>& gout, int h, int w) {
  const int ho = h / 2, wo = w / 2;
  Mat<S> gin(static_cast<long>(h) * w, gout.cols());
  for (Eigen::Index c = 0; c < gout.cols(); ++c)
    for (int xo = 0; xo < wo; ++xo)
      for (int yo = 0; yo < ho; ++yo) {
        const S g = static_cast<S>(0.25) * gout(static_cast<long>(xo) * ho + yo, c);
        const long base = static_cast<long>(2 * xo) * h + 2 * yo;
        gin(base, c) = g;
        gin(base + 1, c) = g;
        gin(base + h, c) = g;
        gin(base + h + 1, c) = g;
      }
  return gin;
}

// ---------------------------------------------------------------------------
// Grid <-> feature-matrix bridging. Column c of the matrix is channel c of
// the grid flattened in column-major plane order, so the conversion is a
// straight memory copy.

template <typename S>
Mat<S> grid_to_mat(const Grid<S>& g) {
  Mat<S> m(static_cast<long>(g.rows()) * g.cols(), g.channels());
  for (int c = 0; c < g.channels(); ++c)
    m.col(c) = Eigen::Map<const Vec<S>>(g.plane(c).data(), m.rows());
  return m;
}

template <typename S>
Grid<S> mat_to_grid(const Mat<S>& m, int rows, int cols) {
  if (m.rows() != static_cast<long>(rows) * cols)
    throw ShapeError("feature matrix does not match target grid shape");
  Grid<S> g(rows, cols, static_cast<int>(m.cols()));
  for (int c = 0; c < g.channels(); ++c)
    Eigen::Map<Vec<S>>(g.plane(c).data(), m.rows()) = m.col(c);
  return g;
}

// ---------------------------------------------------------------------------
// Sinusoidal step embedding (not learned).

template <typename S>
Vec<S> sinusoidal_embedding(double t, int dim) {
  Vec<S> e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) / std::max(1, half - 1));
    e(2 * i) = static_cast<S>(std::sin(t * freq));
    e(2 * i + 1) = static_cast<S>(std::cos(t * freq));
  }
  if (dim % 2) e(dim - 1) = S(0);
  return e;
}

// ---------------------------------------------------------------------------
// Single-head cross-attention from spatial features to a token sequence.

template <typename S>
struct CrossAttention {
  Mat<S> Wq;  // dk x C
  Mat<S> Wk;  // dk x d
  Mat<S> Wv;  // dv x d
  Mat<S> Wo;  // C x dv
  Mat<S> gWq, gWk, gWv, gWo;

  void init(int channels, int token_dim, int attn_dim, Rng& rng) {
    Wq.resize(attn_dim, channels);
    he_uniform_init(Wq, channels, rng);
    Wk.resize(attn_dim, token_dim);
    he_uniform_init(Wk, token_dim, rng);
    Wv.resize(attn_dim, token_dim);
    he_uniform_init(Wv, token_dim, rng);
    Wo.resize(channels, attn_dim);
    he_uniform_init(Wo, attn_dim, rng);
    gWq = Mat<S>::Zero(Wq.rows(), Wq.cols());
    gWk = Mat<S>::Zero(Wk.rows(), Wk.cols());
    gWv = Mat<S>::Zero(Wv.rows(), Wv.cols());
    gWo = Mat<S>::Zero(Wo.rows(), Wo.cols());
  }

  struct Cache {
    Mat<S> h;      // N x C input
    Mat<S> tok;    // L x d
    Mat<S> Q;      // N x dk
    Mat<S> K;      // L x dk
    Mat<S> V;      // L x dv
    Mat<S> A;      // N x L softmax
    Mat<S> Ov;     // N x dv
  };

  // h: (N x C), tokens: (L x d). Returns the residual branch (N x C).
  Mat<S> forward(const Mat<S>& h, const Mat<S>& tokens, Cache* cache) const {
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(Wq.rows())));
    Mat<S> Q, K, V;
    Q.noalias() = h * Wq.transpose();
    K.noalias() = tokens * Wk.transpose();
    V.noalias() = tokens * Wv.transpose();
    Mat<S> scores;
    scores.noalias() = Q * K.transpose();
    scores *= scale;
    Mat<S> A = softmax_rows(scores);
    Mat<S> Ov;
    Ov.noalias() = A * V;
    Mat<S> out;
    out.noalias() = Ov * Wo.transpose();
    if (cache) {
      cache->h = h;
      cache->tok = tokens;
      cache->Q = std::move(Q);
      cache->K = std::move(K);
      cache->V = std::move(V);
      cache->A = std::move(A);
      cache->Ov = std::move(Ov);
    }
    return out;
  }

  // Returns the gradient w.r.t. h; accumulates the gradient w.r.t. the token
  // embeddings into gtokens (L x d) when non-null.
  Mat<S> backward(const Cache& c, const Mat<S>& gout, Mat<S>* gtokens,
                  bool param_grads = true) {
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(Wq.rows())));
    Mat<S> gOv;
    gOv.noalias() = gout * Wo;
    if (param_grads) gWo.noalias() += gout.transpose() * c.Ov;
    Mat<S> gA;
    gA.noalias() = gOv * c.V.transpose();
    Mat<S> gV;
    gV.noalias() = c.A.transpose() * gOv;
    Mat<S> gScores = softmax_rows_backward(c.A, gA);
    gScores *= scale;
    Mat<S> gQ;
    gQ.noalias() = gScores * c.K;
    Mat<S> gK;
    gK.noalias() = gScores.transpose() * c.Q;
    if (param_grads) {
      gWq.noalias() += gQ.transpose() * c.h;
      gWk.noalias() += gK.transpose() * c.tok;
      gWv.noalias() += gV.transpose() * c.tok;
    }
    if (gtokens) {
      gtokens->noalias() += gK * Wk;
      gtokens->noalias() += gV * Wv;
    }
    Mat<S> gh;
    gh.noalias() = gQ * Wq;
    return gh;
  }
};

}  // namespace defectgen::nn
