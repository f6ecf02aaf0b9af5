#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace defectgen::run {

// Built-in defaults for every tunable. Files and --set overrides may only
// touch keys that exist here; unknown keys are configuration errors.
nlohmann::json default_config();

// Layered configuration: defaults < config file < command-line overrides.
// Keys are addressed with dotted paths ("diffusion.T").
class Config {
 public:
  Config();

  static Config resolve(const std::optional<std::filesystem::path>& file,
                        const std::vector<std::string>& overrides);

  const nlohmann::json& values() const { return values_; }
  const nlohmann::json& at(const std::string& dotted) const;

  double number(const std::string& dotted) const;
  int integer(const std::string& dotted) const;
  bool boolean(const std::string& dotted) const;
  std::string str(const std::string& dotted) const;

 private:
  nlohmann::json values_;
};

// Parses one "dotted.path=value" override; the value is parsed as JSON when
// possible and taken as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& spec);

}  // namespace defectgen::run
