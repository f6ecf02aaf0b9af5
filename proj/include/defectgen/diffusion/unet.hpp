#pragma once

#include <string>
#include <vector>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/rng.hpp"
#include "defectgen/nn/layers.hpp"

namespace defectgen::diffusion {

using defectgen::Mat;
using defectgen::Vec;

struct UNetConfig {
  int in_channels = 1;
  int base = 32;        // encoder width; the bottleneck runs at 2*base
  int token_dim = 32;   // text-embedding dimension
  int attn_dim = 32;    // query/key/value width of the cross-attention
  int time_dim = 32;    // sinusoidal embedding size
  int time_hidden = 64; // time-MLP width
};

// Small conditional U-Net: one stride-2 downsample, cross-attention to the
// prompt tokens at the bottleneck, additive time-embedding biases on three
// blocks, and a single skip connection. Works on (H*W x C) feature matrices.
template <typename S>
class UNet {
 public:
  UNet() = default;

  UNet(const UNetConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int B = cfg.base, B2 = 2 * cfg.base;
    conv_in_.init(cfg.in_channels, B, 3, 1, rng);
    enc0_.init(B, B, 3, 1, rng);
    down_.init(B, B2, 3, 2, rng);
    enc1_.init(B2, B2, 3, 1, rng);
    attn_.init(B2, cfg.token_dim, cfg.attn_dim, rng);
    enc2_.init(B2, B2, 3, 1, rng);
    reduce_.init(B2, B, 1, 1, rng);
    dec0_.init(B, B, 3, 1, rng);
    conv_out_.init(B, cfg.in_channels, 3, 1, rng);
    time_mlp1_.init(cfg.time_dim, cfg.time_hidden, rng);
    time_mlp2_.init(cfg.time_hidden, cfg.time_hidden, rng);
    tproj0_.init(cfg.time_hidden, B, rng);
    tproj1_.init(cfg.time_hidden, B2, rng);
    tproj2_.init(cfg.time_hidden, B2, rng);
  }

  const UNetConfig& config() const { return cfg_; }

  struct Acts {
    int H = 0, W = 0;
    Vec<S> emb, m1, s1, temb, tb0, tb1, tb2;
    Mat<S> cols_in, x0, a0;
    Mat<S> cols_enc0, x1, h0;
    Mat<S> cols_down, x2, a2;
    Mat<S> cols_enc1, x3, h1p;
    typename nn::CrossAttention<S>::Cache attn;
    Mat<S> cols_enc2, x4, a4;
    Mat<S> cols_dec0, x5, f0;
    Mat<S> cols_out;
  };

  // z: (H*W x in_channels), tokens: (L x token_dim), t: diffusion step index.
  // acts may be null for inference.
  Mat<S> forward(const Mat<S>& z, int H, int W, double t, const Mat<S>& tokens,
                 Acts* acts) const {
    if (H < 4 || W < 4 || (H % 2) || (W % 2))
      throw ShapeError("denoiser requires even spatial dimensions >= 4");
    if (z.rows() != static_cast<long>(H) * W || z.cols() != cfg_.in_channels)
      throw ShapeError("denoiser input shape mismatch");
    if (tokens.cols() != cfg_.token_dim)
      throw ShapeError("token embedding dimension mismatch");
    const int h2 = H / 2, w2 = W / 2;

    Vec<S> emb = nn::sinusoidal_embedding<S>(t, cfg_.time_dim);
    Vec<S> m1 = time_mlp1_.forward(emb);
    Vec<S> s1 = nn::silu(m1);
    Vec<S> temb = time_mlp2_.forward(s1);
    Vec<S> tb0 = tproj0_.forward(temb);
    Vec<S> tb1 = tproj1_.forward(temb);
    Vec<S> tb2 = tproj2_.forward(temb);

    Acts local;
    Acts& a = acts ? *acts : local;
    const bool cache = acts != nullptr;
    Mat<S>* cc = nullptr;

    cc = cache ? &a.cols_in : nullptr;
    Mat<S> x0 = conv_in_.forward(z, H, W, cc);
    x0.rowwise() += tb0.transpose();
    Mat<S> a0 = nn::silu(x0);

    cc = cache ? &a.cols_enc0 : nullptr;
    Mat<S> x1 = enc0_.forward(a0, H, W, cc);
    Mat<S> h0 = nn::silu(x1);

    cc = cache ? &a.cols_down : nullptr;
    Mat<S> x2 = down_.forward(h0, H, W, cc);
    x2.rowwise() += tb1.transpose();
    Mat<S> a2 = nn::silu(x2);

    cc = cache ? &a.cols_enc1 : nullptr;
    Mat<S> x3 = enc1_.forward(a2, h2, w2, cc);
    Mat<S> h1p = nn::silu(x3);

    Mat<S> h1 = h1p + attn_.forward(h1p, tokens, cache ? &a.attn : nullptr);

    cc = cache ? &a.cols_enc2 : nullptr;
    Mat<S> x4 = enc2_.forward(h1, h2, w2, cc);
    x4.rowwise() += tb2.transpose();
    Mat<S> a4 = nn::silu(x4);

    Mat<S> r = reduce_.forward(a4, h2, w2, nullptr);
    Mat<S> u = nn::upsample2(r, h2, w2);
    u += h0;

    cc = cache ? &a.cols_dec0 : nullptr;
    Mat<S> x5 = dec0_.forward(u, H, W, cc);
    Mat<S> f0 = nn::silu(x5);

    cc = cache ? &a.cols_out : nullptr;
    Mat<S> eps = conv_out_.forward(f0, H, W, cc);

    if (cache) {
      a.H = H;
      a.W = W;
      a.emb = std::move(emb);
      a.m1 = std::move(m1);
      a.s1 = std::move(s1);
      a.temb = std::move(temb);
      a.tb0 = std::move(tb0);
      a.tb1 = std::move(tb1);
      a.tb2 = std::move(tb2);
      a.x0 = std::move(x0);
      a.a0 = std::move(a0);
      a.x1 = std::move(x1);
      a.h0 = std::move(h0);
      a.x2 = std::move(x2);
      a.a2 = std::move(a2);
      a.x3 = std::move(x3);
      a.h1p = std::move(h1p);
      a.x4 = std::move(x4);
      a.a4 = std::move(a4);
      a.x5 = std::move(x5);
      a.f0 = std::move(f0);
    }
    return eps;
  }

  // Accumulates parameter gradients (unless param_grads is false) and, when
  // gtokens is non-null, the gradient w.r.t. the prompt token matrix.
  void backward(const Acts& a, const Mat<S>& geps, Mat<S>* gtokens,
                bool param_grads = true) {
    const int H = a.H, W = a.W, h2 = H / 2, w2 = W / 2;

    Mat<S> g_f0 = conv_out_.backward(a.cols_out, geps, H, W, true, param_grads);
    Mat<S> g_x5 = nn::silu_backward(a.x5, g_f0);
    Mat<S> g_u = dec0_.backward(a.cols_dec0, g_x5, H, W, true, param_grads);

    Mat<S> g_r = nn::upsample2_backward(g_u, h2, w2);
    Mat<S> g_a4 = reduce_.backward(a.a4, g_r, h2, w2, true, param_grads);
    Mat<S> g_x4 = nn::silu_backward(a.x4, g_a4);
    Vec<S> g_tb2 = g_x4.colwise().sum().transpose();
    Mat<S> g_h1 = enc2_.backward(a.cols_enc2, g_x4, h2, w2, true, param_grads);

    Mat<S> g_h1p = attn_.backward(a.attn, g_h1, gtokens, param_grads);
    g_h1p += g_h1;  // residual

    Mat<S> g_x3 = nn::silu_backward(a.x3, g_h1p);
    Mat<S> g_a2 = enc1_.backward(a.cols_enc1, g_x3, h2, w2, true, param_grads);
    Mat<S> g_x2 = nn::silu_backward(a.x2, g_a2);
    Vec<S> g_tb1 = g_x2.colwise().sum().transpose();
    Mat<S> g_h0 = down_.backward(a.cols_down, g_x2, H, W, true, param_grads);
    g_h0 += g_u;  // skip connection

    Mat<S> g_x1 = nn::silu_backward(a.x1, g_h0);
    Mat<S> g_a0 = enc0_.backward(a.cols_enc0, g_x1, H, W, true, param_grads);
    Mat<S> g_x0 = nn::silu_backward(a.x0, g_a0);
    Vec<S> g_tb0 = g_x0.colwise().sum().transpose();
    conv_in_.backward(a.cols_in, g_x0, H, W, false, param_grads);

    if (param_grads) {
      Vec<S> g_temb = tproj0_.backward(a.temb, g_tb0) +
                      tproj1_.backward(a.temb, g_tb1) +
                      tproj2_.backward(a.temb, g_tb2);
      Vec<S> g_s1 = time_mlp2_.backward(a.s1, g_temb);
      Vec<S> g_m1 = nn::silu_backward(a.m1, g_s1);
      time_mlp1_.backward(a.emb, g_m1);
    }
  }

  std::vector<nn::ParamView<S>> params() {
    std::vector<nn::ParamView<S>> v;
    auto conv = [&](const char* n, nn::Conv2d<S>& c) {
      v.push_back({std::string("unet.") + n + ".W", &c.W, &c.gW});
      v.push_back({std::string("unet.") + n + ".b", &c.b, &c.gb});
    };
    auto dense = [&](const char* n, nn::Dense<S>& d) {
      v.push_back({std::string("unet.") + n + ".W", &d.W, &d.gW});
      v.push_back({std::string("unet.") + n + ".b", &d.b, &d.gb});
    };
    conv("conv_in", conv_in_);
    conv("enc0", enc0_);
    conv("down", down_);
    conv("enc1", enc1_);
    v.push_back({"unet.attn.Wq", &attn_.Wq, &attn_.gWq});
    v.push_back({"unet.attn.Wk", &attn_.Wk, &attn_.gWk});
    v.push_back({"unet.attn.Wv", &attn_.Wv, &attn_.gWv});
    v.push_back({"unet.attn.Wo", &attn_.Wo, &attn_.gWo});
    conv("enc2", enc2_);
    conv("reduce", reduce_);
    conv("dec0", dec0_);
    conv("conv_out", conv_out_);
    dense("time_mlp1", time_mlp1_);
    dense("time_mlp2", time_mlp2_);
    dense("tproj0", tproj0_);
    dense("tproj1", tproj1_);
    dense("tproj2", tproj2_);
    return v;
  }

  void zero_grads() {
    for (auto& p : params()) p.g->setZero();
  }

 private:
  UNetConfig cfg_;
  nn::Conv2d<S> conv_in_, enc0_, down_, enc1_, enc2_, reduce_, dec0_, conv_out_;
  nn::CrossAttention<S> attn_;
  nn::Dense<S> time_mlp1_, time_mlp2_, tproj0_, tproj1_, tproj2_;
};

}  // namespace defectgen::diffusion
