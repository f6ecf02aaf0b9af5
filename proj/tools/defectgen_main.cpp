#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "defectgen/core/errors.hpp"
#include "defectgen/run/commands.hpp"

namespace {

// Attaches the flags shared by every subcommand.
void add_common(CLI::App* sub, defectgen::run::CommonOptions& common,
                std::string& config_file, std::string& manifest_path) {
  sub->add_option("--config", config_file, "JSON config file layered over defaults");
  sub->add_option("--set", common.overrides,
                  "config override key.path=value (repeatable)");
  sub->add_option("--seed", common.seed, "master seed")->capture_default_str();
  sub->add_option("--out", common.out, "output path")->required();
  sub->add_option("--manifest", manifest_path,
                  "run-manifest path (default: next to --out)");
}

void finalize_common(defectgen::run::CommonOptions& common,
                     const std::string& config_file,
                     const std::string& manifest_path) {
  if (!config_file.empty()) common.config_file = config_file;
  if (!manifest_path.empty()) common.manifest_path = manifest_path;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"defectgen: few-shot defect synthesis, blending and evaluation"};
  app.require_subcommand(1);

  defectgen::run::CommonOptions common;
  std::string config_file, manifest_path;

  std::string preset = "few_shot";
  std::string dataset, checkpoint, refs, embedding, backgrounds;
  std::string source, mask, target, detections, annotations;
  int count = 0;

  auto* synth = app.add_subcommand("synth-data", "build a procedural benchmark dataset");
  add_common(synth, common, config_file, manifest_path);
  synth->add_option("--preset", preset, "few_shot | zero_shot | pretrain")->required();

  auto* train = app.add_subcommand("train", "train the diffusion backbone");
  add_common(train, common, config_file, manifest_path);
  train->add_option("--dataset", dataset, "dataset manifest.json")->required();

  auto* learn = app.add_subcommand("learn", "learn a concept embedding from references");
  add_common(learn, common, config_file, manifest_path);
  learn->add_option("--checkpoint", checkpoint, "denoiser checkpoint")->required();
  learn->add_option("--refs", refs, "directory of <name>.png + <name>_mask.png")->required();

  auto* gen = app.add_subcommand("generate", "synthesize defects onto backgrounds");
  add_common(gen, common, config_file, manifest_path);
  gen->add_option("--checkpoint", checkpoint, "denoiser checkpoint")->required();
  gen->add_option("--embedding", embedding, "concept embedding file")->required();
  gen->add_option("--backgrounds", backgrounds,
                  "dataset manifest.json or a directory of PNGs")->required();
  gen->add_option("--count", count, "number of samples")->required();

  auto* blendc = app.add_subcommand("blend", "seamlessly integrate a patch");
  add_common(blendc, common, config_file, manifest_path);
  blendc->add_option("--source", source, "synthesized image PNG")->required();
  blendc->add_option("--mask", mask, "binary mask PNG")->required();
  blendc->add_option("--target", target, "background PNG")->required();

  auto* evalc = app.add_subcommand("eval", "score detections against annotations");
  add_common(evalc, common, config_file, manifest_path);
  evalc->add_option("--detections", detections, "detections JSON")->required();
  evalc->add_option("--annotations", annotations, "ground-truth JSON")->required();

  auto* exp = app.add_subcommand("experiment", "run a scripted experiment preset");
  add_common(exp, common, config_file, manifest_path);
  exp->add_option("--preset", preset, "few_shot | zero_shot")->required();

  CLI11_PARSE(app, argc, argv);
  finalize_common(common, config_file, manifest_path);

  try {
    if (synth->parsed()) {
      defectgen::run::cmd_synth_data(common, preset);
    } else if (train->parsed()) {
      defectgen::run::cmd_train(common, dataset);
    } else if (learn->parsed()) {
      defectgen::run::cmd_learn(common, checkpoint, refs);
    } else if (gen->parsed()) {
      defectgen::run::cmd_generate(common, checkpoint, embedding, backgrounds,
                                   count);
    } else if (blendc->parsed()) {
      defectgen::run::cmd_blend(common, source, mask, target);
    } else if (evalc->parsed()) {
      defectgen::run::cmd_eval(common, detections, annotations);
    } else if (exp->parsed()) {
      defectgen::run::cmd_experiment(common, preset);
    }
  } catch (const defectgen::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
