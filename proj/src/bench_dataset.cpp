#include "defectgen/bench/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"

#include "defectgen/core/errors.hpp"
#include "defectgen/core/io_png.hpp"
#include "defectgen/core/rng.hpp"

namespace defectgen::bench {

namespace {

std::uint64_t role_code(const std::string& role) {
  if (role == kRoleReference) return 1;
  if (role == kRoleBackground) return 2;
  if (role == kRoleTest) return 3;
  if (role == kRoleSourceTrain) return 4;
  if (role == kRolePretrain) return 5;
  throw ParamError("unknown dataset role: " + role);
}

std::string item_id(const std::string& role, int idx) {
  const char* prefix = role == kRoleReference      ? "ref"
                       : role == kRoleBackground   ? "bg"
                       : role == kRoleTest         ? "test"
                       : role == kRoleSourceTrain  ? "src"
                                                   : "pre";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03d", prefix, idx);
  return buf;
}

}  // namespace

LabeledSample materialize_item(const DatasetItem& item, int rows, int cols) {
  TextureSpec spec;
  spec.domain = item.domain;
  spec.rows = rows;
  spec.cols = cols;
  spec.seed = derive_seed(item.seed, 0);
  Image bg = synth_background(spec);
  if (!item.defect) {
    LabeledSample s;
    s.image = std::move(bg);
    s.mask = Mask::Zero(rows, cols);
    s.domain = item.domain;
    s.defect = false;
    return s;
  }
  const DefectStroke stroke = sample_stroke(rows, cols, derive_seed(item.seed, 1));
  return synth_scratch(bg, stroke, item.domain);
}

DatasetManifest build_dataset(const std::string& preset, std::uint64_t seed,
                              const std::filesystem::path& out_dir,
                              const DatasetOptions& opt) {
  DatasetManifest m;
  m.preset = preset;
  m.seed = seed;
  m.rows = opt.rows;
  m.cols = opt.cols;

  auto pick = [](int override_v, int preset_v) {
    return override_v >= 0 ? override_v : preset_v;
  };

  struct Plan {
    std::string role;
    std::string domain;
    bool defect;
    int count;
  };
  std::vector<Plan> plans;
  if (preset == "few_shot") {
    plans = {{kRoleReference, kDomainB, true, pick(opt.references, 4)},
             {kRoleBackground, kDomainB, false, pick(opt.backgrounds, 20)},
             {kRoleTest, kDomainB, true, pick(opt.test, 129)}};
  } else if (preset == "zero_shot") {
    plans = {{kRoleReference, kDomainA, true, pick(opt.references, 4)},
             {kRoleSourceTrain, kDomainA, true, pick(opt.source_train, 150)},
             {kRoleBackground, kDomainB, false, pick(opt.backgrounds, 20)},
             {kRoleTest, kDomainB, true, pick(opt.test, 133)}};
  } else if (preset == "pretrain") {
    const int per = pick(opt.pretrain_per_bucket, 24);
    plans = {{kRolePretrain, kDomainA, false, per},
             {kRolePretrain, kDomainB, false, per},
             {kRolePretrain, kDomainA, true, per},
             {kRolePretrain, kDomainB, true, per}};
  } else {
    throw ParamError("unknown dataset preset: " + preset);
  }

  std::set<std::uint64_t> seen;
  int pretrain_idx = 0;
  for (const auto& plan : plans) {
    for (int i = 0; i < plan.count; ++i) {
      DatasetItem item;
      const int idx = plan.role == kRolePretrain ? pretrain_idx++ : i;
      item.id = item_id(plan.role, idx);
      item.role = plan.role;
      item.domain = plan.domain;
      item.defect = plan.defect;
      item.seed = derive_seed(
          seed, (role_code(plan.role) << 32) | static_cast<std::uint64_t>(idx));
      if (!seen.insert(item.seed).second)
        throw DataError("derived dataset seeds collide; choose another seed");
      item.image_path = "images/" + item.id + ".png";
      if (item.defect) item.mask_path = "masks/" + item.id + ".png";
      m.items.push_back(std::move(item));
    }
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "masks", ec);
  if (ec) throw DataError("cannot create dataset directories under " +
                          out_dir.string() + ": " + ec.message());

  for (auto& item : m.items) {
    LabeledSample s = materialize_item(item, m.rows, m.cols);
    write_image_png(out_dir / item.image_path, s.image);
    if (item.defect) {
      write_mask_png(out_dir / item.mask_path, s.mask);
      item.bbox = s.bbox;
    }
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  nlohmann::json j;
  j["preset"] = m.preset;
  j["seed"] = m.seed;
  j["rows"] = m.rows;
  j["cols"] = m.cols;
  auto items = nlohmann::json::array();
  for (const auto& it : m.items) {
    nlohmann::json ji;
    ji["id"] = it.id;
    ji["role"] = it.role;
    ji["domain"] = it.domain;
    ji["seed"] = it.seed;
    ji["defect"] = it.defect;
    ji["image"] = it.image_path;
    if (it.defect) {
      ji["mask"] = it.mask_path;
      ji["bbox"] = {it.bbox.x_min, it.bbox.y_min, it.bbox.x_max, it.bbox.y_max};
    }
    items.push_back(std::move(ji));
  }
  j["items"] = std::move(items);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("manifest write failed: " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    DatasetManifest m;
    m.preset = j.at("preset").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.rows = j.at("rows").get<int>();
    m.cols = j.at("cols").get<int>();
    for (const auto& ji : j.at("items")) {
      DatasetItem it;
      it.id = ji.at("id").get<std::string>();
      it.role = ji.at("role").get<std::string>();
      it.domain = ji.at("domain").get<std::string>();
      it.seed = ji.at("seed").get<std::uint64_t>();
      it.defect = ji.at("defect").get<bool>();
      it.image_path = ji.at("image").get<std::string>();
      if (it.defect) {
        it.mask_path = ji.at("mask").get<std::string>();
        const auto& bb = ji.at("bbox");
        it.bbox = {bb.at(0).get<int>(), bb.at(1).get<int>(), bb.at(2).get<int>(),
                   bb.at(3).get<int>()};
      }
      m.items.push_back(std::move(it));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("dataset manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace defectgen::bench
