// SPDX-License-Identifier: Apache-2.0
#include "sancl/probe.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>
#include <unordered_set>

#include "sancl/errors.hpp"

namespace sancl::probe {

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

// "running" -> "runn" -> "run"
std::string undouble(std::string stem) {
  const std::size_t n = stem.size();
  if (n >= 3 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) && stem[n - 1] != 'l' &&
      stem[n - 1] != 's' && stem[n - 1] != 'z') {
    stem.pop_back();
  }
  return stem;
}

const std::unordered_set<std::string_view>& stopwords() {
  static const std::unordered_set<std::string_view> words = {
      "a",     "an",    "the",   "and",    "or",     "but",   "for",   "of",    "to",
      "in",    "on",    "at",    "by",     "with",   "from",  "as",    "into",  "about",
      "is",    "are",   "was",   "were",   "be",     "been",  "am",    "do",    "doe",
      "did",   "have",  "ha",    "had",    "it",     "its",   "this",  "that",  "these",
      "those", "they",  "them",  "their",  "i",      "me",    "my",    "we",    "our",
      "you",   "your",  "he",    "she",    "his",    "her",   "him",   "so",    "very",
      "just",  "not",   "no",    "too",    "also",   "all",   "any",   "some",  "than",
      "then",  "there", "here",  "when",   "what",   "which", "who",   "will",  "would",
      "can",   "could", "should", "if",    "up",     "out",   "over",  "per",   "pack",
      "pkg",   "set",   "piece", "really", "much",   "more",  "most",  "one",   "get",
      "got",   "like",  "well",  "now",    "only",   "own",   "same",  "such",  "new"};
  return words;
}

bool is_alpha_token(std::string_view t) {
  return !t.empty() &&
         std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isalpha(c) || c == '-' || c == '\''; });
}

bool has_punct(std::string_view t) {
  return std::any_of(t.begin(), t.end(), [](unsigned char c) {
    return std::ispunct(c) && c != '-' && c != '\'';
  });
}

// Third-person pronoun groups; a chain is one group's mentions.
enum class PronounGroup { none, neuter, plural, masculine, feminine };

PronounGroup pronoun_group(std::string_view lower) {
  static const std::map<std::string_view, PronounGroup> table = {
      {"it", PronounGroup::neuter},       {"its", PronounGroup::neuter},
      {"itself", PronounGroup::neuter},   {"this", PronounGroup::neuter},
      {"they", PronounGroup::plural},     {"them", PronounGroup::plural},
      {"their", PronounGroup::plural},    {"theirs", PronounGroup::plural},
      {"themselves", PronounGroup::plural}, {"these", PronounGroup::plural},
      {"those", PronounGroup::plural},    {"he", PronounGroup::masculine},
      {"him", PronounGroup::masculine},   {"his", PronounGroup::masculine},
      {"himself", PronounGroup::masculine}, {"she", PronounGroup::feminine},
      {"her", PronounGroup::feminine},    {"hers", PronounGroup::feminine},
      {"herself", PronounGroup::feminine}};
  auto it = table.find(lower);
  return it == table.end() ? PronounGroup::none : it->second;
}

bool is_demonstrative(std::string_view lower) {
  return lower == "this" || lower == "these" || lower == "those";
}

std::string lower(std::string_view t) {
  std::string s(t);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::string lemmatize(std::string_view token) {
  std::string w = lower(token);
  static const std::map<std::string_view, std::string_view> irregular = {
      {"children", "child"}, {"men", "man"},     {"women", "woman"}, {"feet", "foot"},
      {"teeth", "tooth"},    {"mice", "mouse"},  {"knives", "knife"}, {"leaves", "leaf"},
      {"shelves", "shelf"},  {"people", "person"}};
  if (auto it = irregular.find(w); it != irregular.end()) return std::string(it->second);
  if (!is_alpha_token(w)) return w;

  if (ends_with(w, "ies") && w.size() > 4) return w.substr(0, w.size() - 3) + "y";
  if (ends_with(w, "sses")) return w.substr(0, w.size() - 2);
  if (w.size() > 4 && (ends_with(w, "ches") || ends_with(w, "shes") || ends_with(w, "xes") ||
                       ends_with(w, "zes"))) {
    return w.substr(0, w.size() - 2);
  }
  if (ends_with(w, "ss") || ends_with(w, "us") || ends_with(w, "is")) return w;
  if (ends_with(w, "s") && w.size() > 3) return w.substr(0, w.size() - 1);
  if (ends_with(w, "ing") && w.size() > 5) return undouble(w.substr(0, w.size() - 3));
  if (ends_with(w, "ed") && w.size() > 4) return undouble(w.substr(0, w.size() - 2));
  return w;
}

bool is_stopword(std::string_view lemma) { return stopwords().count(lemma) > 0; }

std::vector<std::string> extract_core_words(const Tokens& name,
                                            const std::optional<NameParse>& parse) {
  if (name.empty()) throw DomainError("extract_core_words: empty product name");
  std::vector<std::string> out;
  auto push = [&](std::string_view tok) {
    const std::string lemma = lemmatize(tok);
    if (!is_alpha_token(lemma) || is_stopword(lemma)) return;
    if (std::find(out.begin(), out.end(), lemma) == out.end()) out.push_back(lemma);
  };

  if (parse) {
    if (parse->root >= name.size()) throw DomainError("extract_core_words: root index out of range");
    const std::size_t lo = parse->root == 0 ? 0 : parse->root - 1;
    const std::size_t hi = std::min(name.size() - 1, parse->root + 1);
    for (std::size_t i = lo; i <= hi; ++i) push(name[i]);
    return out;
  }

  for (const auto& tok : name) {
    if (!tok.empty() && std::isdigit(static_cast<unsigned char>(tok.front()))) break;
    if (has_punct(tok)) {
      // Keep the word part of "Upholstery," then stop.
      std::string head;
      for (char c : tok) {
        if (std::ispunct(static_cast<unsigned char>(c)) && c != '-' && c != '\'') break;
        head.push_back(c);
      }
      if (!head.empty()) push(head);
      break;
    }
    push(tok);
  }
  return out;
}

namespace {

bool cluster_mentions(const Cluster& cluster, const std::vector<Tokens>& sentences,
                      const std::vector<std::string>& core_words) {
  for (const auto& span : cluster) {
    if (span.sentence >= sentences.size()) continue;
    const auto& sent = sentences[span.sentence];
    for (std::size_t i = span.start; i < span.end && i < sent.size(); ++i) {
      const std::string lemma = lemmatize(sent[i]);
      if (std::find(core_words.begin(), core_words.end(), lemma) != core_words.end()) return true;
    }
  }
  return false;
}

}  // namespace

GoldCluster select_gold_cluster(const std::vector<Cluster>& clusters,
                                const std::vector<Tokens>& sentences,
                                const std::vector<std::string>& core_words) {
  GoldCluster gold;
  if (clusters.empty()) return gold;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (cluster_mentions(clusters[i], sentences, core_words)) {
      gold.resolution = GoldCase::core_word_match;
      gold.index = i;
      gold.spans = clusters[i];
      return gold;
    }
  }
  gold.resolution = GoldCase::first_cluster;
  gold.index = 0;
  gold.spans = clusters[0];
  return gold;
}

std::vector<std::uint8_t> ProbeMask::sentence_values() const {
  std::vector<std::uint8_t> out;
  for (const auto& [start, end] : sentences) out.push_back(start < end ? values[start] : 0);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> sentence_offsets(const std::vector<Tokens>& sentences) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t pos = 0;
  for (const auto& s : sentences) {
    out.emplace_back(pos, pos + s.size());
    pos += s.size();
  }
  return out;
}

ProbeMask generate_probe_mask(const corpus::ReviewRecord& review, const GoldCluster& gold) {
  ProbeMask mask;
  mask.sentences = sentence_offsets(review.sentences);
  mask.values.assign(review.token_count(), 0);
  if (gold.empty()) return mask;

  std::vector<bool> hot(review.sentences.size(), false);
  for (const auto& span : gold.spans) {
    if (span.sentence >= review.sentences.size() || span.start >= span.end ||
        span.end > review.sentences[span.sentence].size()) {
      throw AnnotationError("review " + review.review_id + ": span [" +
                            std::to_string(span.sentence) + "," + std::to_string(span.start) + "," +
                            std::to_string(span.end) + "] is out of bounds");
    }
    hot[span.sentence] = true;
  }
  for (std::size_t s = 0; s < hot.size(); ++s) {
    if (!hot[s]) continue;
    const auto [start, end] = mask.sentences[s];
    std::fill(mask.values.begin() + static_cast<std::ptrdiff_t>(start),
              mask.values.begin() + static_cast<std::ptrdiff_t>(end), 1);
  }
  return mask;
}

void check_mask_weights(double alpha, double beta) {
  if (!(alpha <= 1.0 && alpha > beta && beta > 0.0)) {
    throw ParameterError("mask weights must satisfy 1 >= alpha > beta > 0 (alpha=" +
                         std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
  }
}

RealMask realize_mask(const ProbeMask& mask, double alpha, double beta) {
  check_mask_weights(alpha, beta);
  RealMask out{{}, alpha, beta};
  out.values.reserve(mask.size());
  for (auto m : mask.values) out.values.push_back(alpha * m + beta * (1 - m));
  return out;
}

ad::Var realize_mask(const ProbeMask& mask, double alpha, const ad::Var& beta) {
  check_mask_weights(alpha, beta.scalar());
  Matrix hot(1, mask.size()), cold(1, mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    hot[i] = alpha * mask.values[i];
    cold[i] = 1.0 - mask.values[i];
  }
  return ad::add(ad::constant(std::move(hot)), ad::mul_scalar(ad::constant(std::move(cold)), beta));
}

ad::Var generate_beta(const ad::Var& h_seq, const ad::Var& w_gen, const ad::Var& b_gen) {
  return ad::sigmoid(ad::add(ad::matmul(h_seq, w_gen), b_gen));
}

corpus::AnnotationRecord heuristic_annotate(const corpus::ReviewRecord& review,
                                            const std::vector<std::string>& core_words) {
  corpus::AnnotationRecord ann;
  ann.review_id = review.review_id;
  ann.core_words = core_words;

  Cluster core_cluster;
  std::map<PronounGroup, Cluster> chains;
  // Number of the latest core-word mention; later pronouns that agree with it
  // corefer with the product.
  PronounGroup antecedent = PronounGroup::none;
  for (std::size_t s = 0; s < review.sentences.size(); ++s) {
    const auto& sent = review.sentences[s];
    for (std::size_t i = 0; i < sent.size(); ++i) {
      const std::string lemma = lemmatize(sent[i]);
      if (std::find(core_words.begin(), core_words.end(), lemma) != core_words.end()) {
        core_cluster.push_back({s, i, i + 1});
        antecedent = lower(sent[i]) == lemma ? PronounGroup::neuter : PronounGroup::plural;
        continue;
      }
      const std::string low = lower(sent[i]);
      const PronounGroup g = pronoun_group(low);
      if (g == PronounGroup::none) continue;
      if (is_demonstrative(low) && i + 1 < sent.size()) {
        // "this sofa" is a determiner, not a mention.
        const std::string next = lemmatize(sent[i + 1]);
        if (is_alpha_token(next) && !is_stopword(next)) continue;
      }
      if (g == antecedent) {
        core_cluster.push_back({s, i, i + 1});
      } else {
        chains[g].push_back({s, i, i + 1});
      }
    }
  }

  const Cluster* best = nullptr;
  for (const auto& [group, chain] : chains) {
    if (chain.size() < 2) continue;
    auto before = [](const corpus::Span& a, const corpus::Span& b) {
      return a.sentence != b.sentence ? a.sentence < b.sentence : a.start < b.start;
    };
    if (!best || chain.size() > best->size() ||
        (chain.size() == best->size() && before(chain.front(), best->front()))) {
      best = &chain;
    }
  }

  if (!core_cluster.empty()) ann.clusters.push_back(core_cluster);
  if (best) ann.clusters.push_back(*best);
  std::stable_sort(ann.clusters.begin(), ann.clusters.end(), [](const Cluster& a, const Cluster& b) {
    const auto& x = a.front();
    const auto& y = b.front();
    return x.sentence != y.sentence ? x.sentence < y.sentence : x.start < y.start;
  });
  return ann;
}

ProbeMask build_probe_mask(const corpus::ReviewRecord& review, const corpus::ProductRecord& product,
                           const corpus::AnnotationRecord* annotation) {
  std::vector<std::string> core =
      annotation ? annotation->core_words : extract_core_words(product.name);
  const std::vector<Cluster> clusters =
      annotation ? annotation->clusters : heuristic_annotate(review, core).clusters;
  return generate_probe_mask(review, select_gold_cluster(clusters, review.sentences, core));
}

Agreement sentence_agreement(const ProbeMask& a, const ProbeMask& b) {
  if (a.sentences != b.sentences) throw DimensionError("sentence_agreement: masks cover different sentences");
  const auto va = a.sentence_values();
  const auto vb = b.sentence_values();
  Agreement out;
  out.total = va.size();
  for (std::size_t i = 0; i < va.size(); ++i) out.agreeing += va[i] == vb[i];
  return out;
}

}  // namespace sancl::probe
