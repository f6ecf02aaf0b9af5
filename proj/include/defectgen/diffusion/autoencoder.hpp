#pragma once

#include <cmath>
#include <vector>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/grid.hpp"
#include "defectgen/core/rng.hpp"
#include "defectgen/nn/layers.hpp"
#include "defectgen/nn/optim.hpp"

namespace defectgen::diffusion {

// Image <-> latent codec. Identity mode (f = 1) is a bitwise no-op and the
// default operating point; learned mode compresses by a power-of-two factor
// with a small conv encoder/decoder pair (sigmoid output, so decodes stay in
// [0,1]).
template <typename S>
class Autoencoder {
 public:
  enum class Mode { Identity, Learned };

  Autoencoder() = default;  // identity

  static Autoencoder learned(int factor, int image_channels, int latent_channels,
                             Rng& rng) {
    if (factor < 2 || (factor & (factor - 1)) != 0)
      throw ParamError("autoencoder factor must be a power of two >= 2");
    if (latent_channels < 1) throw ParamError("latent_channels must be >= 1");
    Autoencoder ae;
    ae.mode_ = Mode::Learned;
    ae.f_ = factor;
    ae.in_ch_ = image_channels;
    ae.lat_ch_ = latent_channels;
    int stages = 0;
    for (int f = factor; f > 1; f /= 2) ++stages;
    int prev = image_channels;
    for (int i = 0; i < stages; ++i) {
      const int outc = (i + 1 == stages) ? latent_channels : kHidden;
      ae.enc_.emplace_back();
      ae.enc_.back().init(prev, outc, 3, 2, rng);
      prev = outc;
    }
    prev = latent_channels;
    for (int i = 0; i < stages; ++i) {
      ae.dec_.emplace_back();
      ae.dec_.back().init(prev, kHidden, 3, 1, rng);
      prev = kHidden;
    }
    ae.out_.init(kHidden, image_channels, 3, 1, rng);
    return ae;
  }

  Mode mode() const { return mode_; }
  int factor() const { return f_; }
  int image_channels() const { return in_ch_; }
  int latent_channels(int image_channels) const {
    return mode_ == Mode::Identity ? image_channels : lat_ch_;
  }

  Grid<S> encode(const Grid<S>& x) const {
    if (mode_ == Mode::Identity) return x;
    check_divisible(x.rows(), x.cols());
    Mat<S> m = nn::grid_to_mat(x);
    int h = x.rows(), w = x.cols();
    for (std::size_t i = 0; i < enc_.size(); ++i) {
      m = enc_[i].forward(m, h, w, nullptr);
      h /= 2;
      w /= 2;
      if (i + 1 < enc_.size()) m = nn::silu(m);
    }
    return nn::mat_to_grid(m, h, w);
  }

  Grid<S> decode(const Grid<S>& z) const {
    if (mode_ == Mode::Identity) return z;
    Mat<S> m = nn::grid_to_mat(z);
    int h = z.rows(), w = z.cols();
    for (std::size_t i = 0; i < dec_.size(); ++i) {
      m = nn::upsample2(m, h, w);
      h *= 2;
      w *= 2;
      m = nn::silu(dec_[i].forward(m, h, w, nullptr));
    }
    Mat<S> o = out_.forward(m, h, w, nullptr);
    return nn::mat_to_grid(sigmoid(o), h, w);
  }

  // One reconstruction-loss training step (MSE in [0,1] space). Gradients are
  // accumulated into the layer grads; the caller owns the optimizer step.
  double train_step(const Grid<S>& img) {
    if (mode_ == Mode::Identity)
      throw ParamError("identity autoencoder has nothing to train");
    check_divisible(img.rows(), img.cols());
    const int H0 = img.rows(), W0 = img.cols();
    const int stages = static_cast<int>(enc_.size());

    Mat<S> m = nn::grid_to_mat(img);
    const Mat<S> target = m;
    std::vector<Mat<S>> enc_cols(stages), enc_x(stages);
    int h = H0, w = W0;
    for (int i = 0; i < stages; ++i) {
      Mat<S> x = enc_[i].forward(m, h, w, &enc_cols[i]);
      enc_x[i] = x;
      h /= 2;
      w /= 2;
      m = (i + 1 < stages) ? nn::silu(x) : x;
    }

    std::vector<Mat<S>> dec_cols(stages), dec_x(stages);
    for (int i = 0; i < stages; ++i) {
      m = nn::upsample2(m, h, w);
      h *= 2;
      w *= 2;
      Mat<S> x = dec_[i].forward(m, h, w, &dec_cols[i]);
      dec_x[i] = x;
      m = nn::silu(x);
    }
    Mat<S> out_cols;
    Mat<S> ox = out_.forward(m, h, w, &out_cols);
    Mat<S> y = sigmoid(ox);

    const double n = static_cast<double>(y.size());
    const double loss =
        (y - target).template cast<double>().array().square().sum() / n;

    Mat<S> g = ((y - target).array() * (S(2) / static_cast<S>(n)) * y.array() *
                (S(1) - y.array()))
                   .matrix();
    Mat<S> gh = out_.backward(out_cols, g, h, w, true);
    for (int i = stages - 1; i >= 0; --i) {
      Mat<S> gx = nn::silu_backward(dec_x[i], gh);
      Mat<S> gu = dec_[i].backward(dec_cols[i], gx, h, w, true);
      h /= 2;
      w /= 2;
      gh = nn::upsample2_backward(gu, h, w);
    }
    for (int i = stages - 1; i >= 0; --i) {
      Mat<S> gx = (i + 1 == stages) ? gh : nn::silu_backward(enc_x[i], gh);
      gh = enc_[i].backward(enc_cols[i], gx, h * 2, w * 2, i > 0);
      h *= 2;
      w *= 2;
    }
    return loss;
  }

  std::vector<nn::ParamView<S>> params() {
    std::vector<nn::ParamView<S>> v;
    for (std::size_t i = 0; i < enc_.size(); ++i) {
      v.push_back({"ae.enc" + std::to_string(i) + ".W", &enc_[i].W, &enc_[i].gW});
      v.push_back({"ae.enc" + std::to_string(i) + ".b", &enc_[i].b, &enc_[i].gb});
    }
    for (std::size_t i = 0; i < dec_.size(); ++i) {
      v.push_back({"ae.dec" + std::to_string(i) + ".W", &dec_[i].W, &dec_[i].gW});
      v.push_back({"ae.dec" + std::to_string(i) + ".b", &dec_[i].b, &dec_[i].gb});
    }
    if (mode_ == Mode::Learned) {
      v.push_back({"ae.out.W", &out_.W, &out_.gW});
      v.push_back({"ae.out.b", &out_.b, &out_.gb});
    }
    return v;
  }

 private:
  static constexpr int kHidden = 8;

  static Mat<S> sigmoid(const Mat<S>& x) {
    return (S(1) / (S(1) + (-x.array()).exp())).matrix();
  }

  void check_divisible(int h, int w) const {
    if (h % f_ || w % f_)
      throw ShapeError("image dimensions must be divisible by the compression factor");
  }

  Mode mode_ = Mode::Identity;
  int f_ = 1;
  int in_ch_ = 1;
  int lat_ch_ = 1;
  std::vector<nn::Conv2d<S>> enc_, dec_;
  nn::Conv2d<S> out_;
};

template <typename S>
inline double psnr(const Grid<S>& a, const Grid<S>& b) {
  require_same_shape(a, b, "psnr");
  double mse = 0;
  for (int c = 0; c < a.channels(); ++c)
    mse += (a.plane(c).template cast<double>() - b.plane(c).template cast<double>())
               .square()
               .sum();
  mse /= static_cast<double>(a.size());
  if (mse <= 0) return 99.0;
  return 10.0 * std::log10(1.0 / mse);
}

// Trains a learned autoencoder by iterating single-image reconstruction
// steps. Returns the loss trace.
template <typename S>
std::vector<double> train_autoencoder(Autoencoder<S>& ae,
                                      const std::vector<Grid<S>>& images,
                                      int steps, double lr, Rng& rng) {
  if (images.empty()) throw DataError("autoencoder training set is empty");
  nn::Adam<S> opt(ae.params(), lr);
  std::vector<double> trace;
  trace.reserve(steps);
  for (int i = 0; i < steps; ++i) {
    const auto& img = images[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(images.size()) - 1))];
    const double loss = ae.train_step(img);
    if (!std::isfinite(loss))
      throw NumericError("non-finite autoencoder loss at step " + std::to_string(i));
    trace.push_back(loss);
    opt.step();
  }
  return trace;
}

}  // namespace defectgen::diffusion
