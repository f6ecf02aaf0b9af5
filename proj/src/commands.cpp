#include "defectgen/run/commands.hpp"

#include <algorithm>
#include <fstream>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/io_png.hpp"
#include "defectgen/core/log.hpp"
#include "defectgen/diffusion/checkpoint.hpp"
#include "defectgen/inversion/inversion.hpp"
#include "defectgen/run/manifest.hpp"
#include "defectgen/run/pipeline.hpp"

namespace defectgen::run {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Every file below dir, sorted for a stable manifest.
void note_outputs_recursive(RunManifest& m, const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) m.note_output(p);
}

fs::path manifest_target(const CommonOptions& common, bool out_is_dir) {
  if (common.manifest_path) return *common.manifest_path;
  if (out_is_dir) return common.out / "run_manifest.json";
  return fs::path(common.out.string() + ".manifest.json");
}

Backbone backbone_from_checkpoint(const Config& cfg, const fs::path& path) {
  auto lc = diffusion::load_checkpoint(path);
  Backbone b;
  b.model = std::move(lc.model);
  b.sched = std::move(lc.sched);
  b.ae = std::move(lc.ae);
  (void)cfg;
  return b;
}

}  // namespace

void cmd_synth_data(const CommonOptions& common, const std::string& preset) {
  Config cfg = common.resolve_config();
  auto m = RunManifest::start("synth-data", common.seed, cfg.values());
  bench::DatasetOptions dopt;
  dopt.rows = cfg.integer("dataset.rows");
  dopt.cols = cfg.integer("dataset.cols");
  {
    StageTimer t(m, "synth");
    bench::build_dataset(preset, common.seed, common.out, dopt);
  }
  m.note_seed("dataset", common.seed);
  note_outputs_recursive(m, common.out);
  m.save(manifest_target(common, true));
}

void cmd_train(const CommonOptions& common, const fs::path& dataset_manifest) {
  Config cfg = common.resolve_config();
  auto m = RunManifest::start("train", common.seed, cfg.values());
  m.note_input(dataset_manifest);

  LoadedDataset ds = load_dataset(dataset_manifest);
  std::vector<Image> images;
  for (const auto& item : ds.manifest.items) images.push_back(ds.image(item));

  Backbone b;
  {
    StageTimer t(m, "train");
    b = train_backbone(cfg, prompt_labeled(ds), images, common.seed);
  }
  m.note_seed("train", common.seed);
  m.extra["final_loss"] = b.trace.empty() ? 0.0 : b.trace.back();
  diffusion::save_checkpoint(common.out, b.model, b.sched,
                             json{{"dataset", dataset_manifest.string()},
                                  {"seed", common.seed},
                                  {"steps", b.trace.size()}},
                             &b.ae);
  m.note_output(common.out);
  m.save(manifest_target(common, false));
}

void cmd_learn(const CommonOptions& common, const fs::path& checkpoint,
               const fs::path& refs_dir) {
  Config cfg = common.resolve_config();
  auto m = RunManifest::start("learn", common.seed, cfg.values());
  m.note_input(checkpoint);

  Backbone b = backbone_from_checkpoint(cfg, checkpoint);

  // Reference layout: <name>.png with a sibling <name>_mask.png.
  if (!fs::is_directory(refs_dir))
    throw DataError("reference directory not found: " + refs_dir.string());
  std::vector<fs::path> mask_files;
  for (const auto& entry : fs::directory_iterator(refs_dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() > 9 &&
        name.substr(name.size() - 9) == "_mask.png")
      mask_files.push_back(entry.path());
  }
  std::sort(mask_files.begin(), mask_files.end());

  inversion::ReferenceSet<float> rs;
  rs.prompt = diffusion::concept_prompt(cfg.str("inversion.domain"));
  for (const auto& mp : mask_files) {
    const std::string stem = mp.filename().string();
    const fs::path ip = refs_dir / (stem.substr(0, stem.size() - 9) + ".png");
    if (!fs::exists(ip))
      throw DataError("mask without image: " + mp.string());
    m.note_input(ip);
    m.note_input(mp);
    rs.refs.push_back({read_image_png(ip), read_mask_png(mp)});
  }

  inversion::InversionOptions opt;
  opt.steps = cfg.integer("inversion.steps");
  opt.lr = cfg.number("inversion.lr");
  opt.init_word = cfg.str("inversion.init_word");
  opt.beta1 = cfg.number("inversion.adam_beta1");
  opt.context_dilation = cfg.integer("inversion.context_dilation");

  inversion::InversionResult<float> res;
  {
    StageTimer t(m, "invert");
    res = inversion::learn_concept(b.model, b.ae, rs, b.sched, opt, common.seed);
  }
  inversion::ConceptEmbedding emb;
  emb.name = diffusion::kPlaceholderToken;
  emb.v = res.v;
  emb.meta = json{{"domain", cfg.str("inversion.domain")},
                  {"steps", opt.steps},
                  {"seed", common.seed},
                  {"init_word", opt.init_word},
                  {"checkpoint", checkpoint.string()},
                  {"final_loss", res.trace.empty() ? 0.0 : res.trace.back()}};
  inversion::save_embedding(emb, common.out);
  m.note_seed("inversion", common.seed);
  m.note_output(common.out);
  m.save(manifest_target(common, false));
}

void cmd_generate(const CommonOptions& common, const fs::path& checkpoint,
                  const fs::path& embedding_path, const fs::path& backgrounds,
                  int count) {
  Config cfg = common.resolve_config();
  auto m = RunManifest::start("generate", common.seed, cfg.values());
  m.note_input(checkpoint);
  m.note_input(embedding_path);

  Backbone b = backbone_from_checkpoint(cfg, checkpoint);
  auto emb = inversion::load_embedding(embedding_path);

  // Backgrounds: a dataset manifest (role "background") or a PNG directory.
  std::vector<std::pair<std::string, Image>> bgs;
  if (backgrounds.extension() == ".json") {
    m.note_input(backgrounds);
    LoadedDataset ds = load_dataset(backgrounds);
    for (const auto* item : ds.manifest.with_role(bench::kRoleBackground))
      bgs.emplace_back(item->id, ds.image(*item));
  } else {
    if (!fs::is_directory(backgrounds))
      throw DataError("background directory not found: " + backgrounds.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(backgrounds)) {
      const auto name = entry.path().filename().string();
      if (entry.is_regular_file() && entry.path().extension() == ".png" &&
          name.find("_mask") == std::string::npos)
        files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
      m.note_input(p);
      bgs.emplace_back(p.stem().string(), read_image_png(p));
    }
  }

  std::vector<GeneratedSample> samples;
  {
    StageTimer t(m, "generate");
    samples = generate_set(cfg, b, emb, cfg.str("inversion.domain"), bgs, count,
                           common.seed);
  }
  auto boxes = write_generated(common.out, samples);
  eval::save_ground_truth(boxes, common.out / "annotations.json");
  m.note_seed("generate", common.seed);
  note_outputs_recursive(m, common.out);
  m.save(manifest_target(common, true));
}

void cmd_blend(const CommonOptions& common, const fs::path& source,
               const fs::path& mask, const fs::path& target) {
  Config cfg = common.resolve_config();
  auto m = RunManifest::start("blend", common.seed, cfg.values());
  m.note_input(source);
  m.note_input(mask);
  m.note_input(target);
  Image src = read_image_png(source);
  Mask mk = read_mask_png(mask);
  Image dst = read_image_png(target);
  Image out;
  {
    StageTimer t(m, "blend");
    out = blend::integrate(src, mk, dst, integrate_options_from(cfg));
  }
  write_image_png(common.out, out);
  m.note_output(common.out);
  m.save(manifest_target(common, false));
}

void cmd_eval(const CommonOptions& common, const fs::path& detections,
              const fs::path& annotations) {
  Config cfg = common.resolve_config();
  auto m = RunManifest::start("eval", common.seed, cfg.values());
  m.note_input(detections);
  m.note_input(annotations);
  auto dets = eval::load_detections(detections);
  auto gts = eval::load_ground_truth(annotations);
  eval::EvalReport report;
  {
    StageTimer t(m, "eval");
    report = eval::evaluate(dets, gts, {cfg.number("eval.iou")},
                            cfg.number("eval.confidence_threshold"));
  }
  fs::create_directories(common.out);
  eval::save_report_json(report, common.out / "report.json");
  eval::save_pr_csv(report, common.out / "pr_curve.csv");
  note_outputs_recursive(m, common.out);
  m.save(manifest_target(common, true));
}

void cmd_experiment(const CommonOptions& common, const std::string& preset) {
  Config cfg = common.resolve_config();
  auto m = RunManifest::start("experiment", common.seed, cfg.values());
  ExperimentResult result;
  {
    StageTimer t(m, "experiment");
    result = run_experiment(cfg, preset, common.seed, common.out);
  }
  m.note_seed("experiment", common.seed);
  for (const auto& sr : result.seeds)
    m.note_seed("seed_" + std::to_string(&sr - result.seeds.data()), sr.seed);
  note_outputs_recursive(m, common.out);
  m.save(manifest_target(common, true));
  log_info("\n" + comparison_table(result));
}

}  // namespace defectgen::run
