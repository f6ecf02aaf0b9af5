#include "defectgen/run/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/io_png.hpp"
#include "defectgen/core/log.hpp"
#include "defectgen/diffusion/checkpoint.hpp"
#include "defectgen/generation/generate.hpp"
#include "defectgen/inversion/inversion.hpp"

namespace defectgen::run {

using nlohmann::json;

Image LoadedDataset::image(const bench::DatasetItem& item) const {
  return read_image_png(root / item.image_path);
}

Mask LoadedDataset::mask(const bench::DatasetItem& item) const {
  if (item.mask_path.empty()) return Mask();
  return read_mask_png(root / item.mask_path);
}

LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
  LoadedDataset ds;
  ds.manifest = bench::load_manifest(manifest_path);
  ds.root = manifest_path.parent_path();
  return ds;
}

diffusion::UNetConfig unet_config_from(const Config& cfg, int in_channels) {
  diffusion::UNetConfig uc;
  uc.in_channels = in_channels;
  uc.base = cfg.integer("diffusion.base");
  uc.token_dim = cfg.integer("diffusion.token_dim");
  uc.attn_dim = cfg.integer("diffusion.attn_dim");
  uc.time_dim = cfg.integer("diffusion.time_dim");
  uc.time_hidden = cfg.integer("diffusion.time_hidden");
  return uc;
}

diffusion::NoiseSchedule schedule_from(const Config& cfg, int T_override) {
  const int T = T_override > 0 ? T_override : cfg.integer("diffusion.T");
  return diffusion::build_schedule(T, cfg.number("diffusion.beta_min"),
                                   cfg.number("diffusion.beta_max"));
}

diffusion::Autoencoder<float> autoencoder_from(const Config& cfg,
                                               const std::vector<Image>& images,
                                               std::uint64_t seed) {
  const std::string mode = cfg.str("autoencoder.mode");
  if (mode == "identity") return diffusion::Autoencoder<float>();
  if (mode != "learned")
    throw ParamError("autoencoder.mode must be 'identity' or 'learned'");
  if (images.empty())
    throw DataError("learned autoencoder requires training images");
  Rng rng(seed);
  auto ae = diffusion::Autoencoder<float>::learned(
      cfg.integer("autoencoder.factor"), images.front().channels(),
      cfg.integer("autoencoder.latent_channels"), rng);
  diffusion::train_autoencoder(ae, images, cfg.integer("autoencoder.train_steps"),
                               cfg.number("autoencoder.lr"), rng);
  return ae;
}

std::vector<diffusion::LabeledImage<float>> prompt_labeled(const LoadedDataset& ds) {
  std::vector<diffusion::LabeledImage<float>> out;
  out.reserve(ds.manifest.items.size());
  for (const auto& item : ds.manifest.items) {
    diffusion::LabeledImage<float> li;
    li.image = ds.image(item);
    li.prompt = item.defect ? diffusion::defect_prompt(item.domain)
                            : diffusion::clean_prompt(item.domain);
    out.push_back(std::move(li));
  }
  return out;
}

Backbone train_backbone(const Config& cfg,
                        const std::vector<diffusion::LabeledImage<float>>& data,
                        const std::vector<Image>& ae_images, std::uint64_t seed,
                        int T_override, int steps_override) {
  Backbone b;
  b.ae = autoencoder_from(cfg, ae_images, derive_seed(seed, 1));
  b.sched = schedule_from(cfg, T_override);
  const int in_ch = data.empty() ? 1 : data.front().image.channels();
  Rng init_rng(derive_seed(seed, 2));
  b.model = diffusion::DenoiserModel<float>(
      unet_config_from(cfg, b.ae.latent_channels(in_ch)),
      diffusion::default_vocab(), init_rng);
  diffusion::TrainOptions opt;
  opt.steps = steps_override >= 0 ? steps_override
                                  : cfg.integer("diffusion.train_steps");
  opt.lr = cfg.number("diffusion.lr");
  opt.cond_drop_prob = cfg.number("diffusion.cond_drop");
  b.trace = diffusion::train_denoiser(b.model, data, b.sched, b.ae, opt,
                                      derive_seed(seed, 3));
  return b;
}

inversion::ConceptEmbedding learn_embedding(const Config& cfg, Backbone& backbone,
                                            const LoadedDataset& ds,
                                            const std::string& domain,
                                            std::uint64_t seed,
                                            int steps_override) {
  inversion::ReferenceSet<float> rs;
  rs.prompt = diffusion::concept_prompt(domain);
  for (const auto* item : ds.manifest.with_role(bench::kRoleReference)) {
    inversion::Reference<float> r;
    r.image = ds.image(*item);
    r.mask = ds.mask(*item);
    rs.refs.push_back(std::move(r));
  }
  inversion::InversionOptions opt;
  opt.steps = steps_override >= 0 ? steps_override : cfg.integer("inversion.steps");
  opt.lr = cfg.number("inversion.lr");
  opt.init_word = cfg.str("inversion.init_word");
  opt.beta1 = cfg.number("inversion.adam_beta1");
  opt.context_dilation = cfg.integer("inversion.context_dilation");
  auto res = inversion::learn_concept(backbone.model, backbone.ae, rs,
                                      backbone.sched, opt, seed);
  inversion::ConceptEmbedding emb;
  emb.name = diffusion::kPlaceholderToken;
  emb.v = res.v;
  emb.meta = json{{"domain", domain},
                  {"steps", opt.steps},
                  {"seed", seed},
                  {"init_word", opt.init_word},
                  {"final_loss", res.trace.empty() ? 0.0 : res.trace.back()}};
  return emb;
}

blend::IntegrateOptions integrate_options_from(const Config& cfg) {
  blend::IntegrateOptions opt;
  opt.ring_width = cfg.integer("integration.ring_width");
  const std::string mode = cfg.str("integration.color_mode");
  if (mode == "per_channel") {
    opt.color_mode = blend::ColorMode::PerChannel;
  } else if (mode == "luminance") {
    opt.color_mode = blend::ColorMode::Luminance;
  } else {
    throw ParamError("integration.color_mode must be 'per_channel' or 'luminance'");
  }
  opt.poisson.tol = cfg.number("integration.cg_tol");
  opt.poisson.max_iters = cfg.integer("integration.cg_max_iters");
  opt.poisson.direct_limit = cfg.integer("integration.direct_limit");
  return opt;
}

std::vector<GeneratedSample> generate_set(
    const Config& cfg, const Backbone& backbone,
    const inversion::ConceptEmbedding& embedding, const std::string& domain,
    const std::vector<std::pair<std::string, Image>>& backgrounds, int count,
    std::uint64_t seed) {
  if (count < 0) throw ParamError("generation count must be >= 0");
  if (count > 0 && backgrounds.empty())
    throw DataError("generation requires at least one background");
  const bool integrate_on = cfg.boolean("generation.integrate");
  const auto iopt = integrate_options_from(cfg);

  std::vector<GeneratedSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const auto& [bg_id, bg] = backgrounds[static_cast<std::size_t>(i) %
                                          backgrounds.size()];
    GeneratedSample gs;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "gen_%03d", i);
    gs.id = idbuf;
    gs.background_id = bg_id;
    gs.seed = derive_seed(seed, (stream::kSample << 32) |
                                    static_cast<std::uint64_t>(i));

    const std::uint64_t mask_seed =
        derive_seed(seed, (stream::kMask << 32) | static_cast<std::uint64_t>(i));
    auto stroke = bench::sample_stroke(static_cast<int>(bg.rows()),
                                       static_cast<int>(bg.cols()), mask_seed);
    Mask mask = bench::synth_scratch(bg, stroke).mask;

    generation::GenerationRequest req;
    req.background = bg;
    req.defect_mask = mask;
    req.embedding = embedding;
    req.prompt = diffusion::concept_prompt(domain);
    req.seed = gs.seed;
    req.s_start = cfg.number("generation.s_start");
    req.s_end = cfg.number("generation.s_end");
    req.blend_dilation = cfg.integer("generation.blend_dilation");
    auto res = generation::generate_defect(req, backbone.model, backbone.ae,
                                           backbone.sched);

    gs.image = integrate_on ? blend::integrate(res.image, res.mask, bg, iopt)
                            : res.image;
    gs.mask = res.mask;
    gs.bbox = res.bbox;
    gs.provenance = res.provenance;
    gs.provenance["background"] = bg_id;
    gs.provenance["mask_seed"] = mask_seed;
    gs.provenance["integrated"] = integrate_on;
    out.push_back(std::move(gs));
  }
  return out;
}

eval::Box to_eval_box(const PixelBox& b) {
  return eval::Box{static_cast<double>(b.x_min), static_cast<double>(b.y_min),
                   static_cast<double>(b.x_max + 1),
                   static_cast<double>(b.y_max + 1)};
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Round-robin duplication of source indices up to `total` entries
// ("duplicated to reach a total dataset size of ...").
std::vector<std::size_t> duplicate_to(std::size_t count, std::size_t total) {
  std::vector<std::size_t> idx;
  idx.reserve(total);
  for (std::size_t i = 0; i < total; ++i) idx.push_back(i % count);
  return idx;
}

struct ArmData {
  std::string name;
  std::vector<eval::DetectorTrainItem> items;
  const std::string* init_from = nullptr;  // arm name to fine-tune from
};

eval::DetectorConfig detector_config_from(const Config& cfg) {
  eval::DetectorConfig dc;
  dc.window = cfg.integer("detector.window");
  dc.stride = cfg.integer("detector.stride");
  dc.emit_floor = cfg.number("detector.emit_floor");
  dc.train_steps = cfg.integer("detector.train_steps");
  dc.lr = cfg.number("detector.lr");
  dc.jitter = cfg.integer("detector.jitter");
  return dc;
}

void append_duplicated(std::vector<eval::DetectorTrainItem>& dst,
                       const std::vector<eval::DetectorTrainItem>& src,
                       std::size_t total) {
  for (std::size_t i : duplicate_to(src.size(), total)) dst.push_back(src[i]);
}

}  // namespace

std::vector<eval::GroundTruth> write_generated(
    const std::filesystem::path& dir,
    const std::vector<GeneratedSample>& samples) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  std::vector<eval::GroundTruth> boxes;
  json items = json::array();
  for (const auto& s : samples) {
    write_image_png(dir / "images" / (s.id + ".png"), s.image);
    write_mask_png(dir / "masks" / (s.id + "_mask.png"), s.mask);
    json it = s.provenance;
    it["id"] = s.id;
    it["image"] = "images/" + s.id + ".png";
    it["mask"] = "masks/" + s.id + "_mask.png";
    it["bbox"] = {s.bbox.x_min, s.bbox.y_min, s.bbox.x_max, s.bbox.y_max};
    items.push_back(std::move(it));
    boxes.push_back({to_eval_box(s.bbox), s.id});
  }
  std::ofstream out(dir / "samples.json", std::ios::binary);
  if (!out) throw DataError("cannot write " + (dir / "samples.json").string());
  out << items.dump(2) << "\n";
  return boxes;
}

ExperimentResult run_experiment(const Config& cfg, const std::string& preset,
                                std::uint64_t base_seed,
                                const std::filesystem::path& out_dir) {
  const bool few_shot = preset == "few_shot";
  const bool zero_shot = preset == "zero_shot";
  if (!few_shot && !zero_shot)
    throw ParamError("experiment preset must be 'few_shot' or 'zero_shot'");

  ExperimentResult result;
  result.preset = preset;
  result.arm_names = few_shot
                         ? std::vector<std::string>{"real_only", "synthetic_only",
                                                    "real_plus_synthetic"}
                         : std::vector<std::string>{"source_only", "synthetic_only",
                                                    "synthetic_finetune"};

  const int num_seeds = cfg.integer("experiment.num_seeds");
  if (num_seeds < 1) throw ParamError("experiment.num_seeds must be >= 1");
  const int size = cfg.integer("experiment.image_size");
  const int exp_T = cfg.integer("experiment.T");
  const int train_steps = cfg.integer("experiment.train_steps");
  const int inv_steps = cfg.integer("experiment.inversion_steps");
  const int gen_count = cfg.integer("experiment.generate_count");
  const std::size_t parity = static_cast<std::size_t>(
      cfg.integer("experiment.parity_total"));
  const double iou = cfg.number("eval.iou");
  const double conf = cfg.number("eval.confidence_threshold");

  std::filesystem::create_directories(out_dir);

  for (int k = 0; k < num_seeds; ++k) {
    const std::uint64_t s = derive_seed(base_seed, 1000 + static_cast<std::uint64_t>(k));
    const auto sdir = out_dir / ("seed_" + std::to_string(k));
    std::filesystem::create_directories(sdir);
    log_info("experiment " + preset + ": seed " + std::to_string(k + 1) + "/" +
             std::to_string(num_seeds));

    ExperimentSeedResult seed_res;
    seed_res.seed = s;

    // Identifies the failing arm and stage if anything below throws.
    std::string current_stage = "datasets";
    try {
      // Stage: datasets.
      bench::DatasetOptions dopt;
      dopt.rows = size;
      dopt.cols = size;
      bench::build_dataset(preset, s, sdir / "dataset", dopt);
      LoadedDataset ds = load_dataset(sdir / "dataset" / "manifest.json");
      bench::build_dataset("pretrain", derive_seed(s, stream::kPretrainData),
                           sdir / "pretrain", dopt);
      LoadedDataset pre = load_dataset(sdir / "pretrain" / "manifest.json");

      // Stage: backbone.
      current_stage = "backbone";
      std::vector<Image> pre_images;
      for (const auto& item : pre.manifest.items)
        pre_images.push_back(pre.image(item));
      Backbone backbone =
          train_backbone(cfg, prompt_labeled(pre), pre_images,
                         derive_seed(s, stream::kBackbone), exp_T, train_steps);
      diffusion::save_checkpoint(sdir / "backbone.dgc", backbone.model,
                                 backbone.sched,
                                 json{{"preset", preset}, {"seed", s}},
                                 &backbone.ae);

      // Stage: concept inversion (references live on A for zero-shot).
      current_stage = "inversion";
      const std::string ref_domain = few_shot ? bench::kDomainB : bench::kDomainA;
      auto embedding = learn_embedding(cfg, backbone, ds, ref_domain,
                                       derive_seed(s, stream::kInversion),
                                       inv_steps);
      inversion::save_embedding(embedding, sdir / "concept.dfe");

      // Stage: generation onto the target-domain backgrounds.
      current_stage = "generation";
      std::vector<std::pair<std::string, Image>> backgrounds;
      for (const auto* item : ds.manifest.with_role(bench::kRoleBackground))
        backgrounds.emplace_back(item->id, ds.image(*item));
      auto synth = generate_set(cfg, backbone, embedding, bench::kDomainB,
                                backgrounds, gen_count, s);
      auto synth_boxes = write_generated(sdir / "synthetic", synth);
      eval::save_ground_truth(synth_boxes, sdir / "synthetic" / "annotations.json");

      // Shared detector pools.
      std::vector<eval::DetectorTrainItem> negatives;
      for (const auto* item : ds.manifest.with_role(bench::kRoleBackground))
        negatives.push_back({ds.image(*item), Mask()});
      std::vector<eval::DetectorTrainItem> synth_items;
      for (const auto& gsample : synth)
        synth_items.push_back({gsample.image, gsample.mask});

      std::vector<eval::DetectorTrainItem> real_items;
      const char* real_role =
          few_shot ? bench::kRoleReference : bench::kRoleSourceTrain;
      for (const auto* item : ds.manifest.with_role(real_role))
        real_items.push_back({ds.image(*item), ds.mask(*item)});

      // Arm compositions.
      std::vector<ArmData> arms;
      if (few_shot) {
        ArmData a0{"real_only", {}, nullptr};
        append_duplicated(a0.items, real_items, parity);
        ArmData a1{"synthetic_only", {}, nullptr};
        append_duplicated(a1.items, synth_items, parity);
        ArmData a2{"real_plus_synthetic", {}, nullptr};
        append_duplicated(a2.items, real_items, parity / 2);
        append_duplicated(a2.items, synth_items, parity - parity / 2);
        arms = {std::move(a0), std::move(a1), std::move(a2)};
      } else {
        ArmData a0{"source_only", {}, nullptr};
        a0.items = real_items;  // the full source-domain training split
        ArmData a1{"synthetic_only", {}, nullptr};
        append_duplicated(a1.items, synth_items, real_items.size());
        ArmData a2{"synthetic_finetune", {}, nullptr};
        append_duplicated(a2.items, synth_items, real_items.size());
        arms = {std::move(a0), std::move(a1), std::move(a2)};
        arms[2].init_from = &arms[0].name;
      }
      for (auto& arm : arms)
        arm.items.insert(arm.items.end(), negatives.begin(), negatives.end());

      // Test split and its ground truth.
      auto test_items = ds.manifest.with_role(bench::kRoleTest);
      std::vector<eval::GroundTruth> gts;
      for (const auto* item : test_items)
        if (item->defect) gts.push_back({to_eval_box(item->bbox), item->id});
      eval::save_ground_truth(gts, sdir / "test_annotations.json");

      // Train, detect, evaluate per arm.
      std::map<std::string, eval::Detector> trained;
      const auto dc = detector_config_from(cfg);
      for (std::size_t ai = 0; ai < arms.size(); ++ai) {
        const auto& arm = arms[ai];
        current_stage = "arm " + arm.name;
        const std::uint64_t arm_seed = derive_seed(s, stream::kArmBase + ai);
        eval::DetectorTrainResult tr;
        if (arm.init_from) {
          tr = eval::finetune_detector(trained.at(*arm.init_from), arm.items,
                                       cfg.integer("detector.finetune_steps"),
                                       arm_seed);
        } else {
          tr = eval::train_detector(arm.items, dc, arm_seed);
        }
        trained[arm.name] = tr.detector;
        tr.detector.save(sdir / (arm.name + "_detector.dgc"));

        std::vector<eval::Detection> dets;
        for (const auto* item : test_items) {
          auto d = tr.detector.detect(ds.image(*item), item->id);
          dets.insert(dets.end(), d.begin(), d.end());
        }
        eval::save_detections(dets, sdir / (arm.name + "_detections.json"));
        auto report = eval::evaluate(dets, gts, {iou}, conf);
        eval::save_report_json(report, sdir / (arm.name + "_report.json"));
        eval::save_pr_csv(report, sdir / (arm.name + "_pr.csv"));
        seed_res.arms.push_back({arm.name, std::move(report)});
        log_info("  arm " + arm.name + ": mAP " +
                 std::to_string(seed_res.arms.back().report.ap_at_iou.at(iou)));
      }
    } catch (const Error& e) {
      log_warn("experiment " + preset + " aborted at seed " + std::to_string(k) +
               ", stage '" + current_stage + "': " + e.what());
      throw;
    }

    result.seeds.push_back(std::move(seed_res));
  }

  // Medians over seeds.
  for (const auto& name : result.arm_names) {
    std::vector<double> values;
    for (const auto& sr : result.seeds)
      for (const auto& arm : sr.arms)
        if (arm.arm == name)
          values.push_back(arm.report.ap_at_iou.begin()->second);
    result.median_map[name] = median(values);
  }

  save_comparison_csv(result, out_dir / "comparison.csv");
  {
    std::ofstream out(out_dir / "comparison.txt", std::ios::binary);
    out << comparison_table(result);
  }
  {
    json summary;
    summary["preset"] = preset;
    summary["num_seeds"] = num_seeds;
    json med = json::object();
    for (const auto& [name, v] : result.median_map) med[name] = v;
    summary["median_map_at_iou"] = med;
    const std::string baseline = few_shot ? "real_only" : "source_only";
    const std::string augmented =
        few_shot ? "real_plus_synthetic" : "synthetic_finetune";
    summary["baseline_arm"] = baseline;
    summary["augmented_arm"] = augmented;
    summary["augmented_ge_baseline"] =
        result.median_map.at(augmented) >= result.median_map.at(baseline);
    std::ofstream out(out_dir / "experiment_summary.json", std::ios::binary);
    out << summary.dump(2) << "\n";
  }
  return result;
}

namespace {

// Per-arm medians of each reported column across seeds.
struct ArmRow {
  double map = 0, best_f1 = 0, precision = 0, recall = 0, f1 = 0;
};

ArmRow arm_row(const ExperimentResult& r, const std::string& name) {
  std::vector<double> maps, bests, precs, recs, f1s;
  for (const auto& sr : r.seeds)
    for (const auto& arm : sr.arms)
      if (arm.arm == name) {
        maps.push_back(arm.report.ap_at_iou.begin()->second);
        bests.push_back(arm.report.best.f1);
        precs.push_back(arm.report.op.precision);
        recs.push_back(arm.report.op.recall);
        f1s.push_back(arm.report.op.f1);
      }
  return {median(maps), median(bests), median(precs), median(recs), median(f1s)};
}

std::string map_column_label(const ExperimentResult& r) {
  double iou = 0.01;
  if (!r.seeds.empty() && !r.seeds.front().arms.empty())
    iou = r.seeds.front().arms.front().report.ap_at_iou.begin()->first;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "mAP@%g", iou);
  return buf;
}

}  // namespace

std::string comparison_table(const ExperimentResult& r) {
  const std::string map_label = map_column_label(r);
  char line[256];
  std::string out;
  std::snprintf(line, sizeof(line), "%-22s %10s %10s %10s %10s %10s\n", "arm",
                map_label.c_str(), "Best F1", "Precision", "Recall", "F-1");
  out += line;
  for (const auto& name : r.arm_names) {
    ArmRow row = arm_row(r, name);
    std::snprintf(line, sizeof(line), "%-22s %10.4f %10.4f %10.4f %10.4f %10.4f\n",
                  name.c_str(), row.map, row.best_f1, row.precision, row.recall,
                  row.f1);
    out += line;
  }
  return out;
}

void save_comparison_csv(const ExperimentResult& r,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "arm," << map_column_label(r) << ",Best F1,Precision,Recall,F-1\n";
  char line[256];
  for (const auto& name : r.arm_names) {
    ArmRow row = arm_row(r, name);
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  name.c_str(), row.map, row.best_f1, row.precision, row.recall,
                  row.f1);
    out << line;
  }
}

}  // namespace defectgen::run
