#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/grid.hpp"
#include "defectgen/core/log.hpp"
#include "defectgen/core/rng.hpp"
#include "defectgen/diffusion/autoencoder.hpp"
#include "defectgen/diffusion/model.hpp"
#include "defectgen/diffusion/sampler.hpp"
#include "defectgen/diffusion/schedule.hpp"
#include "defectgen/nn/optim.hpp"

namespace defectgen::diffusion {

template <typename S>
struct LabeledImage {
  Grid<S> image;
  Prompt prompt;
};

struct TrainOptions {
  int steps = 2000;
  double lr = 1e-3;
  double cond_drop_prob = 0.1;  // probability of swapping in the null prompt
  int log_every = 0;            // 0 = silent
};

// Denoising-loss training: per step sample an item, a step index t and unit
// noise, form z_t from the (frozen-autoencoder) latent, and regress the noise
// with plain MSE. Returns the per-step loss trace. The RNG draw order per
// step is fixed: item index, prompt drop, t, then the noise field.
template <typename S>
std::vector<double> train_denoiser(DenoiserModel<S>& model,
                                   const std::vector<LabeledImage<S>>& dataset,
                                   const NoiseSchedule& sched,
                                   const Autoencoder<S>& ae,
                                   const TrainOptions& opt, std::uint64_t seed) {
  if (dataset.empty()) throw DataError("training dataset is empty");
  if (opt.steps < 0) throw ParamError("negative step count");

  std::vector<Grid<S>> latents;
  latents.reserve(dataset.size());
  for (const auto& item : dataset) latents.push_back(ae.encode(item.image));

  Rng rng(seed);
  nn::Adam<S> optim(model.params(), opt.lr);
  std::vector<double> trace;
  trace.reserve(opt.steps);

  for (int step = 0; step < opt.steps; ++step) {
    const auto idx = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<long>(dataset.size()) - 1));
    const bool drop = rng.uniform() < opt.cond_drop_prob;
    const int t = static_cast<int>(rng.uniform_int(1, sched.T));
    const Grid<S>& z0 = latents[idx];
    Grid<S> eps = normal_like(z0, rng);
    Grid<S> z_t = forward_diffuse(z0, t, eps, sched);

    const Prompt& prompt = drop ? null_prompt() : dataset[idx].prompt;
    Mat<S> tokens = model.text.encode(prompt, nullptr);
    Mat<S> zmat = nn::grid_to_mat(z_t);
    typename UNet<S>::Acts acts;
    Mat<S> eps_hat =
        model.unet.forward(zmat, z0.rows(), z0.cols(), t, tokens, &acts);

    Mat<S> eps_mat = nn::grid_to_mat(eps);
    const double n = static_cast<double>(eps_mat.size());
    const double loss =
        (eps_hat - eps_mat).template cast<double>().array().square().sum() / n;

    Mat<S> g = ((eps_hat - eps_mat).array() * static_cast<S>(2.0 / n)).matrix();
    Mat<S> gtokens = Mat<S>::Zero(tokens.rows(), tokens.cols());
    model.unet.backward(acts, g, &gtokens);
    model.text.accumulate_grads(prompt, gtokens, nullptr, true);

    if (!std::isfinite(loss)) {
      const double gn = optim.grad_norm();
      throw NumericError("non-finite training loss at step " +
                         std::to_string(step) + " (loss=" + std::to_string(loss) +
                         ", grad_norm=" + std::to_string(gn) + ")");
    }
    optim.step();
    trace.push_back(loss);
    if (opt.log_every > 0 && (step + 1) % opt.log_every == 0)
      log_info("train step " + std::to_string(step + 1) + "/" +
               std::to_string(opt.steps) + " loss " + std::to_string(loss));
  }
  return trace;
}

}  // namespace defectgen::diffusion
