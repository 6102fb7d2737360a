// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sancl/attention.hpp"
#include "sancl/autograd.hpp"
#include "sancl/corpus.hpp"
#include "sancl/gru.hpp"
#include "sancl/rng.hpp"

namespace sancl::enc {

inline constexpr std::size_t kPad = 0;
inline constexpr std::size_t kUnk = 1;

/// Lowercased token -> row index. Rows 0 and 1 are <pad> and <unk>.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& words);

  /// Every token of the products and reviews, in first-seen order.
  static Vocabulary from_split(const corpus::DatasetSplit& split);

  std::size_t index(const std::string& token) const;
  std::vector<std::size_t> indices(const corpus::Tokens& tokens) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  bool contains(const std::string& token) const;

 private:
  void add(const std::string& word);
  std::vector<std::string> words_;
  std::map<std::string, std::size_t> index_;
};

/// |V| x d table. Without pretrained vectors rows are uniform(-0.1, 0.1) and
/// trainable; <pad>/<unk> start at zero.
class EmbeddingTable {
 public:
  EmbeddingTable(Vocabulary vocab, std::size_t dim, Rng& rng);

  /// Reads "word v1 ... vd" lines. Vocabulary words found in the file take
  /// its vector; others keep the random init. The table is frozen unless
  /// `trainable` is set.
  static EmbeddingTable from_text_file(const std::filesystem::path& path, Vocabulary vocab, Rng& rng,
                                       bool trainable = false, std::size_t* found = nullptr);

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t dim() const { return weights_.value.cols(); }
  Parameter& weights() { return weights_; }
  const Parameter& weights() const { return weights_; }

  /// l x d rows for `tokens`; inverted dropout with rate `dropout` when
  /// `rng` is given (training), identity otherwise.
  ad::Var embed(const corpus::Tokens& tokens, double dropout = 0.0, Rng* rng = nullptr);

 private:
  Vocabulary vocab_;
  Parameter weights_;
};

struct TextEncoding {
  ad::Var token_states;    // l x d_h
  ad::Var sequence_state;  // 1 x d_h, last row of token_states
};

TextEncoding encode_text(const ad::Var& embeddings, const GruVars& gru);

/// Self-attention with residual over RoI rows (n x d_v).
ad::Var encode_visual(const ad::Var& features, const ad::Var& w_a, const ad::Var& w_v);

}  // namespace sancl::enc
