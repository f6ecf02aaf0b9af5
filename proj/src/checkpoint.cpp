#include "defectgen/diffusion/checkpoint.hpp"

#include <cstring>

#include "defectgen/core/blockfile.hpp"
#include "defectgen/core/errors.hpp"

namespace defectgen::diffusion {

namespace {

void append_param_blocks(std::vector<NamedBlock>& blocks,
                         const std::vector<nn::ParamView<float>>& params) {
  for (const auto& p : params) {
    NamedBlock b;
    b.name = p.name;
    b.rows = p.w->rows();
    b.cols = p.w->cols();
    b.data.resize(static_cast<std::size_t>(p.w->size()));
    std::memcpy(b.data.data(), p.w->data(), b.data.size() * sizeof(float));
    blocks.push_back(std::move(b));
  }
}

void restore_param_blocks(const BlockFile& bf,
                          const std::vector<nn::ParamView<float>>& params) {
  for (const auto& p : params) {
    const NamedBlock& b = bf.find(p.name);
    if (b.rows != p.w->rows() || b.cols != p.w->cols())
      throw FormatError("checkpoint: shape mismatch for block '" + p.name + "'");
    std::memcpy(p.w->data(), b.data.data(), b.data.size() * sizeof(float));
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     DenoiserModel<float>& model, const NoiseSchedule& sched,
                     const nlohmann::json& info, const Autoencoder<float>* ae) {
  nlohmann::json manifest;
  manifest["kind"] = "denoiser";
  manifest["config"] = {{"in_channels", model.cfg.in_channels},
                        {"base", model.cfg.base},
                        {"token_dim", model.cfg.token_dim},
                        {"attn_dim", model.cfg.attn_dim},
                        {"time_dim", model.cfg.time_dim},
                        {"time_hidden", model.cfg.time_hidden}};
  manifest["vocab"] = model.text.vocab;
  std::vector<double> beta(sched.beta.data(), sched.beta.data() + sched.T);
  manifest["schedule"] = {{"T", sched.T}, {"beta", beta}};
  manifest["info"] = info;

  std::vector<NamedBlock> blocks;
  append_param_blocks(blocks, model.params());
  if (ae && ae->mode() == Autoencoder<float>::Mode::Learned) {
    manifest["autoencoder"] = {
        {"mode", "learned"},
        {"factor", ae->factor()},
        {"image_channels", ae->image_channels()},
        {"latent_channels", ae->latent_channels(ae->image_channels())}};
    append_param_blocks(blocks, const_cast<Autoencoder<float>*>(ae)->params());
  } else {
    manifest["autoencoder"] = {{"mode", "identity"}};
  }
  write_block_file(path, std::move(manifest), blocks);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  BlockFile bf = read_block_file(path);
  try {
    if (bf.manifest.at("kind").get<std::string>() != "denoiser")
      throw FormatError("checkpoint: kind is not 'denoiser'");
    const auto& jc = bf.manifest.at("config");
    UNetConfig cfg;
    cfg.in_channels = jc.at("in_channels").get<int>();
    cfg.base = jc.at("base").get<int>();
    cfg.token_dim = jc.at("token_dim").get<int>();
    cfg.attn_dim = jc.at("attn_dim").get<int>();
    cfg.time_dim = jc.at("time_dim").get<int>();
    cfg.time_hidden = jc.at("time_hidden").get<int>();
    auto vocab = bf.manifest.at("vocab").get<std::vector<std::string>>();

    LoadedCheckpoint lc;
    const auto& js = bf.manifest.at("schedule");
    lc.sched.T = js.at("T").get<int>();
    auto beta = js.at("beta").get<std::vector<double>>();
    if (static_cast<int>(beta.size()) != lc.sched.T)
      throw FormatError("checkpoint: schedule length mismatch");
    lc.sched.beta.resize(lc.sched.T);
    lc.sched.alpha_bar.resize(lc.sched.T);
    double prod = 1.0;
    for (int i = 0; i < lc.sched.T; ++i) {
      lc.sched.beta(i) = beta[static_cast<std::size_t>(i)];
      prod *= 1.0 - beta[static_cast<std::size_t>(i)];
      lc.sched.alpha_bar(i) = prod;
    }

    Rng init_rng(0);
    lc.model = DenoiserModel<float>(cfg, vocab, init_rng);
    restore_param_blocks(bf, lc.model.params());

    const auto ja = bf.manifest.value("autoencoder",
                                      nlohmann::json{{"mode", "identity"}});
    if (ja.at("mode").get<std::string>() == "learned") {
      lc.ae = Autoencoder<float>::learned(ja.at("factor").get<int>(),
                                          ja.at("image_channels").get<int>(),
                                          ja.at("latent_channels").get<int>(),
                                          init_rng);
      restore_param_blocks(bf, lc.ae.params());
    }
    lc.info = bf.manifest.value("info", nlohmann::json::object());
    return lc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
}

}  // namespace defectgen::diffusion
