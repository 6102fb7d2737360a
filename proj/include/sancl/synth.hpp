// SPDX-License-Identifier: Apache-2.0
#pragma once

// Deterministic corpus generator with a planted helpfulness signal.
//
// A review with score s mentions its product (by noun or by a pronoun chain)
// in one or two sentences, and each of those sentences carries s of the
// product's aspect words. Other sentences carry filler and a few of the same
// aspect words unrelated to the score. Review images mix the review's
// text-topic direction with a random one in proportion s/4, so higher scores
// sit closer to the review's own text and to the product's images.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sancl/corpus.hpp"

namespace sancl::synth {

struct GeneratorConfig {
  std::size_t train_products = 200;
  std::size_t dev_products = 40;
  std::size_t test_products = 40;
  std::size_t reviews_per_product = 10;
  std::size_t aspect_words = 60;  // shared aspect vocabulary
  std::size_t aspects_per_product = 6;
  std::size_t feature_dim = 32;
  std::size_t embed_dim = 32;
  std::size_t rois_min = 3;
  std::size_t rois_max = 5;
  double no_mention_rate = 0.1;
  std::size_t cold_aspect_max = 2;  // score-independent aspect words per non-mention sentence
  double visual_noise = 0.3;

  /// Throws ConfigError (degenerate sizes, reviews/product < 2).
  void validate() const;
};

struct TruthMask {
  std::string review_id;
  std::vector<std::uint8_t> values;
  bool clean = false;  // single unambiguous mention style, recoverable without annotations
};

struct WordVector {
  std::string word;
  std::vector<double> values;
};

struct SyntheticCorpus {
  corpus::DatasetSplit train, dev, test;
  std::vector<TruthMask> train_masks, dev_masks, test_masks;
  std::vector<WordVector> embeddings;
};

SyntheticCorpus synthesize(const GeneratorConfig& config, std::uint64_t seed);

/// out/{train,dev,test}/{products,reviews,annotations,masks}.jsonl plus
/// features, out/embeddings.txt and out/generator.json.
void write_corpus(const SyntheticCorpus& corpus, const GeneratorConfig& config, std::uint64_t seed,
                  const std::filesystem::path& out);

std::string truth_to_jsonl(const TruthMask& m);

/// Flat keys named as the fields; unknown keys raise ConfigError.
void apply_generator_json(GeneratorConfig& config, const nlohmann::json& j, const std::string& source);
nlohmann::ordered_json generator_to_json(const GeneratorConfig& config);

}  // namespace sancl::synth
