// SPDX-License-Identifier: Apache-2.0
#pragma once

// Probe masks: which review sentences mention the product, either by name or
// through a coreference chain.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sancl/autograd.hpp"
#include "sancl/corpus.hpp"

namespace sancl::probe {

using corpus::Cluster;
using corpus::Tokens;

/// Lowercased token with plural / -ing / -ed suffixes stripped.
std::string lemmatize(std::string_view token);
bool is_stopword(std::string_view lemma);

/// Dependency root of a product name, when a parser has supplied one.
struct NameParse {
  std::size_t root = 0;
};

/// Lemmas of the words around the name's root (root +- 1 content token).
/// Without a parse: content tokens before the first punctuation mark or
/// digit run, minus stopwords. An all-stopword name yields {}.
std::vector<std::string> extract_core_words(const Tokens& name,
                                            const std::optional<NameParse>& parse = std::nullopt);

enum class GoldCase {
  core_word_match,  // a cluster mentions a core word
  first_cluster,    // clusters exist but none mentions a core word
  no_clusters,
};

struct GoldCluster {
  GoldCase resolution = GoldCase::no_clusters;
  std::optional<std::size_t> index;  // position in the input cluster list
  Cluster spans;

  bool empty() const { return spans.empty(); }
};

/// Picks the product-mention cluster: the first cluster containing any core
/// word; otherwise clusters[0]; otherwise nothing.
GoldCluster select_gold_cluster(const std::vector<Cluster>& clusters,
                                const std::vector<Tokens>& sentences,
                                const std::vector<std::string>& core_words);

struct ProbeMask {
  std::vector<std::uint8_t> values;                              // one per review token
  std::vector<std::pair<std::size_t, std::size_t>> sentences;    // [start, end) token offsets

  std::size_t size() const { return values.size(); }
  /// Mask value of each sentence.
  std::vector<std::uint8_t> sentence_values() const;
};

/// Sentence boundaries of a review as flat token offsets.
std::vector<std::pair<std::size_t, std::size_t>> sentence_offsets(const std::vector<Tokens>& sentences);

/// Marks every sentence that holds a span of `gold` with 1 over its full
/// token range; an empty gold cluster yields the all-zero mask. Throws
/// AnnotationError on spans outside the review.
ProbeMask generate_probe_mask(const corpus::ReviewRecord& review, const GoldCluster& gold);

/// M' = alpha * M + beta * (1 - M)
struct RealMask {
  std::vector<double> values;
  double alpha = 1.0;
  double beta = 0.5;
};

/// Throws ParameterError unless 1 >= alpha > beta > 0.
void check_mask_weights(double alpha, double beta);
RealMask realize_mask(const ProbeMask& mask, double alpha, double beta);
/// Differentiable M' (1 x l) with beta a 1 x 1 graph value.
ad::Var realize_mask(const ProbeMask& mask, double alpha, const ad::Var& beta);

/// beta = sigmoid(h_seq W_gen + b_gen); h_seq is 1 x d, W_gen d x 1, b_gen 1 x 1.
ad::Var generate_beta(const ad::Var& h_seq, const ad::Var& w_gen, const ad::Var& b_gen);

/// Stand-in for an external coreference tool. Clusters: (a) every token whose
/// lemma is a core word, plus the later pronouns agreeing in number with the
/// nearest such token, (b) the most frequent remaining third-person pronoun
/// chain with at least two mentions. Clusters are ordered by first mention.
corpus::AnnotationRecord heuristic_annotate(const corpus::ReviewRecord& review,
                                            const std::vector<std::string>& core_words);

/// Full pipeline for one review: annotation (if given) or heuristic clusters,
/// core words from the annotation or the product name, gold selection, mask.
ProbeMask build_probe_mask(const corpus::ReviewRecord& review, const corpus::ProductRecord& product,
                           const corpus::AnnotationRecord* annotation);

/// Fraction of sentences on which two masks of the same review agree.
struct Agreement {
  std::size_t agreeing = 0;
  std::size_t total = 0;
  double rate() const { return total == 0 ? 1.0 : static_cast<double>(agreeing) / total; }
  Agreement& operator+=(const Agreement& o) {
    agreeing += o.agreeing;
    total += o.total;
    return *this;
  }
};
Agreement sentence_agreement(const ProbeMask& a, const ProbeMask& b);

}  // namespace sancl::probe
