#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "json.hpp"

namespace defectgen::inversion {

// A learned concept: the pseudo-word's embedding vector plus provenance.
struct ConceptEmbedding {
  std::string name;  // token name, e.g. "<s*>"
  Eigen::VectorXf v;
  nlohmann::json meta;  // domain label, seed, step count, ...
};

// Binary layout (little-endian):
//   magic "DFE1" | version u16 | name_len u16 | name UTF-8
//   | dim u32 | dim x float32 | meta_len u32 | meta UTF-8 JSON
//   | CRC32 of all preceding bytes.
void save_embedding(const ConceptEmbedding& e, const std::filesystem::path& path);
ConceptEmbedding load_embedding(const std::filesystem::path& path);

}  // namespace defectgen::inversion
