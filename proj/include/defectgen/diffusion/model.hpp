#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defectgen/core/grid.hpp"
#include "defectgen/core/hash.hpp"
#include "defectgen/core/rng.hpp"
#include "defectgen/diffusion/unet.hpp"
#include "defectgen/diffusion/vocab.hpp"
#include "defectgen/nn/layers.hpp"

namespace defectgen::diffusion {

// Denoiser bundle: the U-Net plus its text encoder. Conditioning is a word
// prompt (optionally carrying the learned concept vector for "<s*>"); the
// unconditional branch is the reserved null prompt.
template <typename S>
struct DenoiserModel {
  UNetConfig cfg;
  TextEncoder<S> text;
  UNet<S> unet;

  DenoiserModel() = default;

  DenoiserModel(const UNetConfig& c, const std::vector<std::string>& vocab,
                Rng& rng)
      : cfg(c), unet(c, rng) {
    text.init(vocab, c.token_dim, rng);
  }

  Grid<S> predict_noise(const Grid<S>& z_t, int t, const Prompt& prompt,
                        const Vec<S>* concept_vec = nullptr) const {
    Mat<S> tokens = text.encode(prompt, concept_vec);
    Mat<S> z = nn::grid_to_mat(z_t);
    Mat<S> eps = unet.forward(z, z_t.rows(), z_t.cols(), t, tokens, nullptr);
    return nn::mat_to_grid(eps, z_t.rows(), z_t.cols());
  }

  std::vector<nn::ParamView<S>> params() {
    auto v = unet.params();
    v.push_back({"text.table", &text.table, &text.gtable});
    return v;
  }

  void zero_grads() {
    for (auto& p : params()) p.g->setZero();
  }

  long param_count() {
    long n = 0;
    for (auto& p : params()) n += p.w->size();
    return n;
  }

  // Byte-level fingerprint of all parameters in registry order; used to
  // assert the frozen-model guarantee around concept learning.
  std::uint64_t param_fingerprint() {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (auto& p : params())
      h = fnv1a64(p.w->data(), sizeof(S) * static_cast<std::size_t>(p.w->size()), h);
    return h;
  }
};

}  // namespace defectgen::diffusion
