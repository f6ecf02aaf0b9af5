#pragma once

#include <string>
#include <vector>

#include "defectgen/core/errors.hpp"
#include "defectgen/core/rng.hpp"
#include "defectgen/nn/layers.hpp"

namespace defectgen::diffusion {

using Prompt = std::vector<std::string>;

inline constexpr const char* kPlaceholderToken = "<s*>";
inline constexpr const char* kNullToken = "<null>";

// Tiny lookup-table text encoder: a fixed word list with one trainable
// embedding row per word. Prompts are short word sequences; the special token
// "<s*>" is resolved against an externally supplied concept vector instead of
// the table, which is what makes concept learning possible with the rest of
// the model frozen.
template <typename S>
struct TextEncoder {
  std::vector<std::string> vocab;
  Mat<S> table;   // V x d
  Mat<S> gtable;  // V x d
  int dim = 0;

  void init(std::vector<std::string> words, int d, Rng& rng) {
    vocab = std::move(words);
    dim = d;
    table.resize(static_cast<long>(vocab.size()), d);
    nn::he_uniform_init(table, d, rng);
    gtable = Mat<S>::Zero(table.rows(), table.cols());
  }

  int token_id(const std::string& word) const {
    for (std::size_t i = 0; i < vocab.size(); ++i)
      if (vocab[i] == word) return static_cast<int>(i);
    throw ParamError("unknown token: " + word);
  }

  // Returns the (L x d) token matrix. If the prompt uses the placeholder,
  // concept_vec must be provided and placeholder_row (when non-null) receives
  // its row index; it is -1 otherwise.
  Mat<S> encode(const Prompt& prompt, const Vec<S>* concept_vec,
                int* placeholder_row = nullptr) const {
    if (prompt.empty()) throw ParamError("empty prompt");
    Mat<S> tok(static_cast<long>(prompt.size()), dim);
    int prow = -1;
    for (std::size_t i = 0; i < prompt.size(); ++i) {
      if (prompt[i] == kPlaceholderToken) {
        if (!concept_vec)
          throw ParamError("prompt uses <s*> but no concept embedding was given");
        if (concept_vec->size() != dim)
          throw ShapeError("concept embedding dimension mismatch");
        tok.row(i) = concept_vec->transpose();
        prow = static_cast<int>(i);
      } else {
        tok.row(i) = table.row(token_id(prompt[i]));
      }
    }
    if (placeholder_row) *placeholder_row = prow;
    return tok;
  }

  // Scatters a token-matrix gradient back to the table (and, for the
  // placeholder row, into gconcept when non-null).
  void accumulate_grads(const Prompt& prompt, const Mat<S>& gtokens,
                        Vec<S>* gconcept, bool table_grads) {
    for (std::size_t i = 0; i < prompt.size(); ++i) {
      if (prompt[i] == kPlaceholderToken) {
        if (gconcept) *gconcept += gtokens.row(i).transpose();
      } else if (table_grads) {
        gtable.row(token_id(prompt[i])) += gtokens.row(i);
      }
    }
  }
};

// Standard word list used across the pipeline. Domain tokens name the two
// synthetic surface families.
inline std::vector<std::string> default_vocab() {
  return {kNullToken, "a", "defect", "on", "surface-A", "surface-B"};
}

inline Prompt clean_prompt(const std::string& domain_token) {
  return {domain_token};
}

inline Prompt defect_prompt(const std::string& domain_token) {
  return {"defect", "on", domain_token};
}

inline Prompt null_prompt() { return {kNullToken}; }

inline Prompt concept_prompt(const std::string& domain_token) {
  return {kPlaceholderToken, "on", domain_token};
}

}  // namespace defectgen::diffusion
