#include "defectgen/run/config.hpp"

#include <fstream>

#include "defectgen/core/errors.hpp"

namespace defectgen::run {

using nlohmann::json;

json default_config() {
  return json{
      {"diffusion",
       {{"T", 120},
        {"beta_min", 1e-4},
        {"beta_max", 0.06},
        {"base", 32},
        {"token_dim", 32},
        {"attn_dim", 32},
        {"time_dim", 32},
        {"time_hidden", 64},
        {"train_steps", 6000},
        {"lr", 1e-3},
        {"cond_drop", 0.1}}},
      {"autoencoder",
       {{"mode", "identity"},  // "identity" | "learned"
        {"factor", 2},
        {"latent_channels", 4},
        {"train_steps", 1200},
        {"lr", 2e-3}}},
      {"inversion",
       {{"steps", 2000},
        {"lr", 5e-3},
        {"init_word", "defect"},
        {"adam_beta1", 0.0},
        {"context_dilation", 0},
        {"domain", "surface-B"}}},
      {"generation",
       {{"s_start", 1.0},
        {"s_end", 7.5},
        {"blend_dilation", 1},
        {"integrate", true}}},
      {"integration",
       {{"ring_width", 3},
        {"color_mode", "per_channel"},  // "per_channel" | "luminance"
        {"cg_tol", 1e-6},
        {"cg_max_iters", 10000},
        {"direct_limit", 10000}}},
      {"detector",
       {{"window", 16},
        {"stride", 4},
        {"emit_floor", 0.05},
        {"train_steps", 1500},
        {"lr", 1e-3},
        {"jitter", 3},
        {"finetune_steps", 600}}},
      {"eval", {{"iou", 0.01}, {"confidence_threshold", 0.40}}},
      {"dataset", {{"rows", 64}, {"cols", 64}}},
      {"experiment",
       {{"num_seeds", 3},
        {"image_size", 64},
        {"T", 80},
        {"train_steps", 3000},
        {"inversion_steps", 800},
        {"generate_count", 48},
        {"parity_total", 300}}},
  };
}

namespace {

json::json_pointer pointer_of(const std::string& dotted) {
  std::string p = "/";
  for (char c : dotted) p += (c == '.') ? '/' : c;
  return json::json_pointer(p);
}

// Every path in `candidate` must exist in `reference`; returns the first
// offending dotted path, empty if none.
std::string first_unknown_key(const json& reference, const json& candidate,
                              const std::string& prefix) {
  if (!candidate.is_object()) return {};
  for (const auto& [key, value] : candidate.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!reference.is_object() || !reference.contains(key)) return path;
    if (value.is_object()) {
      std::string bad = first_unknown_key(reference.at(key), value, path);
      if (!bad.empty()) return bad;
    }
  }
  return {};
}

}  // namespace

Config::Config() : values_(default_config()) {}

void apply_override(json& config, const std::string& spec) {
  auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ParamError("override must look like key.path=value; got '" + spec + "'");
  const std::string key = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings are taken literally
  }
  config[pointer_of(key)] = value;
}

Config Config::resolve(const std::optional<std::filesystem::path>& file,
                       const std::vector<std::string>& overrides) {
  Config cfg;
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw DataError("cannot open config file: " + file->string());
    json layer;
    try {
      layer = json::parse(in);
    } catch (const json::exception& e) {
      throw ParamError("config file " + file->string() + ": " + e.what());
    }
    std::string bad = first_unknown_key(cfg.values_, layer, "");
    if (!bad.empty())
      throw ParamError("unknown config key '" + bad + "' in " + file->string());
    cfg.values_.merge_patch(layer);
  }
  for (const auto& spec : overrides) apply_override(cfg.values_, spec);
  std::string bad = first_unknown_key(default_config(), cfg.values_, "");
  if (!bad.empty()) throw ParamError("unknown config key '" + bad + "'");
  return cfg;
}

const json& Config::at(const std::string& dotted) const {
  auto ptr = pointer_of(dotted);
  if (!values_.contains(ptr))
    throw ParamError("unknown config key '" + dotted + "'");
  return values_.at(ptr);
}

double Config::number(const std::string& dotted) const {
  const json& v = at(dotted);
  if (!v.is_number()) throw ParamError("config key '" + dotted + "' must be a number");
  return v.get<double>();
}

int Config::integer(const std::string& dotted) const {
  const json& v = at(dotted);
  if (!v.is_number_integer())
    throw ParamError("config key '" + dotted + "' must be an integer");
  return v.get<int>();
}

bool Config::boolean(const std::string& dotted) const {
  const json& v = at(dotted);
  if (!v.is_boolean()) throw ParamError("config key '" + dotted + "' must be a bool");
  return v.get<bool>();
}

std::string Config::str(const std::string& dotted) const {
  const json& v = at(dotted);
  if (!v.is_string()) throw ParamError("config key '" + dotted + "' must be a string");
  return v.get<std::string>();
}

}  // namespace defectgen::run
