// SPDX-License-Identifier: Apache-2.0
#include "sancl/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "sancl/errors.hpp"
#include "sancl/probe.hpp"
#include "sancl/rng.hpp"

namespace sancl::synth {

void GeneratorConfig::validate() const {
  auto bad = [](const std::string& key, const std::string& what) {
    throw ConfigError("generator: key '" + key + "': " + what);
  };
  if (train_products == 0) bad("train_products", "must be positive");
  if (reviews_per_product < 2) bad("reviews_per_product", "must be at least 2 for a product to be rankable");
  if (aspects_per_product < 4) bad("aspects_per_product", "must be at least 4");
  if (aspect_words < aspects_per_product) bad("aspect_words", "must be at least aspects_per_product");
  if (feature_dim == 0) bad("feature_dim", "must be positive");
  if (embed_dim == 0) bad("embed_dim", "must be positive");
  if (rois_min == 0 || rois_max < rois_min) bad("rois_max", "need 1 <= rois_min <= rois_max");
  if (!(no_mention_rate >= 0.0 && no_mention_rate <= 1.0)) bad("no_mention_rate", "must lie in [0, 1]");
  if (!(visual_noise >= 0.0)) bad("visual_noise", "must be non-negative");
}

namespace {

enum class WordClass { function, mention, style, aspect, filler };

constexpr std::array<WordClass, 5> kClasses = {WordClass::function, WordClass::mention, WordClass::style,
                                               WordClass::aspect, WordClass::filler};

constexpr std::array<const char*, 10> kFunctionWords = {"the", "i", "and", "with", "was",
                                                        "very", "have", "like", "a", "we"};
constexpr std::array<const char*, 2> kPronouns = {"they", "them"};

constexpr std::array<double, 5> kScoreWeights = {0.35, 0.25, 0.15, 0.15, 0.10};

using Vec = std::vector<double>;

Vec unit(Vec v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0.0)
    for (double& x : v) x /= n;
  return v;
}

Vec random_unit(Rng& rng, std::size_t d) {
  Vec v(d);
  for (double& x : v) x = rng.normal();
  return unit(std::move(v));
}

/// Consonant-vowel pseudo-words. Vowels a/e/o and no sibilant consonants keep
/// "<word>s" lemmatizing back to "<word>".
std::string pseudo_word(Rng& rng) {
  static const char* consonants = "bdfgklmnprtv";
  static const char* vowels = "aeo";
  const std::size_t syllables = 2 + rng.index(2);
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w.push_back(consonants[rng.index(12)]);
    w.push_back(vowels[rng.index(3)]);
  }
  return w;
}

struct Lexicon {
  std::vector<std::string> nouns, styles, aspects, fillers;
  std::map<std::string, WordClass> word_class;
  std::map<std::string, std::size_t> aspect_index;
};

Lexicon make_lexicon(const GeneratorConfig& c, Rng& rng) {
  Lexicon lex;
  std::set<std::string> taken;
  for (const char* w : kFunctionWords) taken.insert(w);
  for (const char* w : kPronouns) taken.insert(w);
  auto fresh = [&](std::vector<std::string>& pool, std::size_t n) {
    while (pool.size() < n) {
      std::string w = pseudo_word(rng);
      if (probe::is_stopword(w) || probe::is_stopword(w + "s") || taken.count(w) || taken.count(w + "s")) continue;
      taken.insert(w);
      taken.insert(w + "s");
      pool.push_back(std::move(w));
    }
  };
  fresh(lex.nouns, 40);
  fresh(lex.styles, 20);
  fresh(lex.aspects, c.aspect_words);
  fresh(lex.fillers, 40);

  for (const char* w : kFunctionWords) lex.word_class[w] = WordClass::function;
  for (const char* w : kPronouns) lex.word_class[w] = WordClass::mention;
  for (const auto& w : lex.nouns) {
    lex.word_class[w] = WordClass::mention;
    lex.word_class[w + "s"] = WordClass::mention;
  }
  for (const auto& w : lex.styles) lex.word_class[w] = WordClass::style;
  for (std::size_t i = 0; i < lex.aspects.size(); ++i) {
    lex.word_class[lex.aspects[i]] = WordClass::aspect;
    lex.aspect_index[lex.aspects[i]] = i;
  }
  for (const auto& w : lex.fillers) lex.word_class[w] = WordClass::filler;
  return lex;
}

struct World {
  const GeneratorConfig& config;
  Lexicon lex;
  std::vector<Vec> aspect_latent;  // feature_dim unit vectors
};

std::string filler_word(World& w, Rng& rng) {
  if (rng.bernoulli(0.3)) {
    static constexpr std::array<const char*, 5> glue = {"and", "with", "was", "very", "a"};
    return glue[rng.index(glue.size())];
  }
  return w.lex.fillers[rng.index(w.lex.fillers.size())];
}

/// `body` tokens with `aspects` spread over random positions.
corpus::Tokens body(World& w, Rng& rng, const std::vector<std::string>& aspects) {
  const std::size_t len = std::max<std::size_t>(aspects.size() + 2, 5 + rng.index(3));
  corpus::Tokens out(len);
  std::vector<std::size_t> pos(len);
  for (std::size_t i = 0; i < len; ++i) pos[i] = i;
  for (std::size_t i = len; i > 1; --i) std::swap(pos[i - 1], pos[rng.index(i)]);
  std::vector<bool> used(len, false);
  for (std::size_t k = 0; k < aspects.size(); ++k) {
    out[pos[k]] = aspects[k];
    used[pos[k]] = true;
  }
  for (std::size_t i = 0; i < len; ++i)
    if (!used[i]) out[i] = filler_word(w, rng);
  return out;
}

Matrix visual_rows(World& w, Rng& rng, const Vec& centre, double weight) {
  const auto& c = w.config;
  const std::size_t n = c.rois_min + rng.index(c.rois_max - c.rois_min + 1);
  const double noise = c.visual_noise / std::sqrt(static_cast<double>(c.feature_dim));
  Matrix m(n, c.feature_dim);
  for (std::size_t r = 0; r < n; ++r) {
    const Vec other = random_unit(rng, c.feature_dim);
    for (std::size_t j = 0; j < c.feature_dim; ++j)
      m(r, j) = static_cast<float>(weight * centre[j] + (1.0 - weight) * other[j] + noise * rng.normal());
  }
  return m;
}

int sample_score(Rng& rng) {
  double u = rng.uniform();
  for (int s = 0; s < 4; ++s) {
    if (u < kScoreWeights[static_cast<std::size_t>(s)]) return s;
    u -= kScoreWeights[static_cast<std::size_t>(s)];
  }
  return 4;
}

std::int64_t votes_for(int score, Rng& rng) {
  if (score == 0) return static_cast<std::int64_t>(rng.index(2));
  if (score == 4) return 16 + static_cast<std::int64_t>(rng.index(25));
  const std::int64_t lo = std::int64_t{1} << score;
  return lo + static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(lo)));
}

enum class Mention { none, noun, pronoun, mixed };

struct SplitOut {
  corpus::DatasetSplit split;
  std::vector<TruthMask> masks;
};

SplitOut make_split(World& w, Rng& rng, const std::string& tag, std::size_t n_products) {
  const auto& c = w.config;
  std::vector<corpus::ProductRecord> products;
  std::vector<corpus::ReviewRecord> reviews;
  std::vector<corpus::AnnotationRecord> annotations;
  std::vector<TruthMask> masks;

  for (std::size_t p = 0; p < n_products; ++p) {
    char pid[32];
    std::snprintf(pid, sizeof pid, "%s-p%04zu", tag.c_str(), p + 1);
    const std::string noun = w.lex.nouns[rng.index(w.lex.nouns.size())];
    const std::string style = w.lex.styles[rng.index(w.lex.styles.size())];
    std::vector<std::size_t> own(w.lex.aspects.size());
    for (std::size_t i = 0; i < own.size(); ++i) own[i] = i;
    for (std::size_t i = 0; i < c.aspects_per_product; ++i) std::swap(own[i], own[i + rng.index(own.size() - i)]);
    own.resize(c.aspects_per_product);
    auto aspect = [&](std::size_t k) { return w.lex.aspects[own[k]]; };
    auto random_aspects = [&](std::size_t n) {
      std::vector<std::string> out;
      for (std::size_t i = 0; i < n; ++i) out.push_back(aspect(rng.index(own.size())));
      return out;
    };

    corpus::ProductRecord prod;
    prod.product_id = pid;
    prod.name = {style, noun + "s", ",", aspect(0), "and", aspect(1), "6/pkg"};
    prod.sentences = {{"the", noun + "s", "have", aspect(0), aspect(1), aspect(2)},
                      {"with", aspect(3), "and", aspect(std::min<std::size_t>(4, own.size() - 1)), "very", aspect(1)}};
    Vec centre(c.feature_dim, 0.0);
    for (std::size_t a : own)
      for (std::size_t j = 0; j < c.feature_dim; ++j) centre[j] += w.aspect_latent[a][j];
    centre = unit(std::move(centre));
    prod.features_path = "features/" + prod.product_id + ".sfv";
    prod.visual_features = visual_rows(w, rng, centre, 1.0);
    const std::vector<std::string> core = {style, noun};

    std::vector<int> scores;
    do {
      scores.clear();
      for (std::size_t r = 0; r < c.reviews_per_product; ++r) scores.push_back(sample_score(rng));
    } while (std::all_of(scores.begin(), scores.end(), [&](int s) { return s == scores.front(); }));

    for (std::size_t r = 0; r < c.reviews_per_product; ++r) {
      const int s = scores[r];
      char rid[48];
      std::snprintf(rid, sizeof rid, "%s-r%02zu", pid, r + 1);
      corpus::ReviewRecord rev;
      rev.review_id = rid;
      rev.product_id = pid;
      rev.votes = votes_for(s, rng);
      rev.helpfulness = corpus::label_from_votes(rev.votes);

      const std::size_t n_sent = 3 + rng.index(3);
      Mention mode = Mention::none;
      if (!rng.bernoulli(c.no_mention_rate)) {
        const double u = rng.uniform();
        mode = u < 0.45 ? Mention::noun : u < 0.85 ? Mention::pronoun : Mention::mixed;
      }
      const std::size_t n_hot = mode == Mention::none ? 0 : 1 + rng.index(2);
      std::vector<std::size_t> order(n_sent);
      for (std::size_t i = 0; i < n_sent; ++i) order[i] = i;
      for (std::size_t i = n_sent; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
      std::vector<bool> hot(n_sent, false);
      for (std::size_t i = 0; i < n_hot; ++i) hot[order[i]] = true;
      // Without a mention the score-bearing words still land in one sentence.
      const std::size_t carrier = order[0];

      corpus::Cluster cluster;
      std::vector<std::string> topic_words;
      std::size_t hot_seen = 0;
      for (std::size_t si = 0; si < n_sent; ++si) {
        corpus::Tokens sent;
        if (hot[si]) {
          const bool use_noun = mode == Mention::noun || (mode == Mention::mixed && hot_seen + 1 == n_hot);
          if (use_noun) {
            sent = {"the", noun + "s"};
            cluster.push_back({si, 1, 2});
          } else {
            sent = {"they"};
            cluster.push_back({si, 0, 1});
          }
          const auto words = random_aspects(static_cast<std::size_t>(s));
          topic_words.insert(topic_words.end(), words.begin(), words.end());
          const auto b = body(w, rng, words);
          sent.insert(sent.end(), b.begin(), b.end());
          const bool lone_pronoun = mode == Mention::pronoun && n_hot == 1;
          const bool lone_mixed = mode == Mention::mixed && n_hot == 1;
          if (lone_pronoun || lone_mixed) {
            sent.insert(sent.end(), {"i", "like", "them"});
            cluster.push_back({si, sent.size() - 1, sent.size()});
          }
          ++hot_seen;
        } else {
          std::vector<std::string> words;
          if (mode == Mention::none && si == carrier) {
            words = random_aspects(static_cast<std::size_t>(s));
            topic_words = words;
          }
          const std::size_t noise = rng.index(c.cold_aspect_max + 1);
          const auto extra = random_aspects(noise);
          words.insert(words.end(), extra.begin(), extra.end());
          sent = {rng.bernoulli(0.5) ? "i" : "we"};
          const auto b = body(w, rng, words);
          sent.insert(sent.end(), b.begin(), b.end());
        }
        rev.sentences.push_back(std::move(sent));
      }

      Vec topic(c.feature_dim, 0.0);
      for (const auto& word : topic_words) {
        const Vec& z = w.aspect_latent[w.lex.aspect_index.at(word)];
        for (std::size_t j = 0; j < c.feature_dim; ++j) topic[j] += z[j];
      }
      topic = topic_words.empty() ? random_unit(rng, c.feature_dim) : unit(std::move(topic));
      rev.features_path = "features/" + rev.review_id + ".sfv";
      rev.visual_features = visual_rows(w, rng, topic, static_cast<double>(s) / 4.0);

      corpus::AnnotationRecord ann{rev.review_id, core, {}};
      if (!cluster.empty()) {
        std::sort(cluster.begin(), cluster.end(), [](const corpus::Span& a, const corpus::Span& b) {
          return a.sentence != b.sentence ? a.sentence < b.sentence : a.start < b.start;
        });
        ann.clusters.push_back(cluster);
      }

      TruthMask truth{rev.review_id, {}, mode != Mention::mixed || n_hot == 1};
      for (std::size_t si = 0; si < n_sent; ++si)
        truth.values.insert(truth.values.end(), rev.sentences[si].size(), hot[si] ? 1 : 0);

      reviews.push_back(std::move(rev));
      annotations.push_back(std::move(ann));
      masks.push_back(std::move(truth));
    }
    products.push_back(std::move(prod));
  }
  return {corpus::DatasetSplit(std::move(products), std::move(reviews), std::move(annotations)), std::move(masks)};
}

std::vector<WordVector> make_embeddings(World& w, Rng& rng) {
  const auto& c = w.config;
  std::map<WordClass, Vec> centroid;
  for (WordClass k : kClasses) {
    Vec v = random_unit(rng, c.embed_dim);
    for (double& x : v) x *= 1.5;
    centroid[k] = std::move(v);
  }
  // Aspect words also carry a projection of their visual latent.
  Matrix proj(c.embed_dim, c.feature_dim);
  for (auto& x : proj.data()) x = rng.normal() / std::sqrt(static_cast<double>(c.feature_dim));
  const double noise = 0.3 / std::sqrt(static_cast<double>(c.embed_dim));

  std::vector<WordVector> out;
  for (const auto& [word, cls] : w.lex.word_class) {
    WordVector wv{word, centroid[cls]};
    if (cls == WordClass::aspect) {
      const Vec& z = w.aspect_latent[w.lex.aspect_index.at(word)];
      for (std::size_t i = 0; i < c.embed_dim; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c.feature_dim; ++j) s += proj(i, j) * z[j];
        wv.values[i] += 0.5 * s;
      }
    }
    for (double& x : wv.values) x = static_cast<float>(x + noise * rng.normal());
    out.push_back(std::move(wv));
  }
  return out;
}

}  // namespace

SyntheticCorpus synthesize(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  Rng root(seed);
  Rng word_rng = root.fork(1);
  Rng latent_rng = root.fork(2);
  Rng embed_rng = root.fork(3);
  Rng train_rng = root.fork(4);
  Rng dev_rng = root.fork(5);
  Rng test_rng = root.fork(6);

  World w{config, make_lexicon(config, word_rng), {}};
  for (std::size_t i = 0; i < config.aspect_words; ++i) w.aspect_latent.push_back(random_unit(latent_rng, config.feature_dim));

  SyntheticCorpus out;
  auto train = make_split(w, train_rng, "train", config.train_products);
  auto dev = make_split(w, dev_rng, "dev", config.dev_products);
  auto test = make_split(w, test_rng, "test", config.test_products);
  out.train = std::move(train.split);
  out.train_masks = std::move(train.masks);
  out.dev = std::move(dev.split);
  out.dev_masks = std::move(dev.masks);
  out.test = std::move(test.split);
  out.test_masks = std::move(test.masks);
  out.embeddings = make_embeddings(w, embed_rng);
  return out;
}

std::string truth_to_jsonl(const TruthMask& m) {
  nlohmann::ordered_json j;
  j["review_id"] = m.review_id;
  j["mask"] = m.values;
  j["clean"] = m.clean;
  return j.dump();
}

void write_corpus(const SyntheticCorpus& corpus, const GeneratorConfig& config, std::uint64_t seed,
                  const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  fs::create_directories(out);
  const std::array<std::pair<const char*, std::pair<const corpus::DatasetSplit*, const std::vector<TruthMask>*>>, 3>
      splits = {{{"train", {&corpus.train, &corpus.train_masks}},
                 {"dev", {&corpus.dev, &corpus.dev_masks}},
                 {"test", {&corpus.test, &corpus.test_masks}}}};
  for (const auto& [name, data] : splits) {
    const fs::path dir = out / name;
    corpus::save_corpus(*data.first, dir);
    std::ofstream masks(dir / "masks.jsonl", std::ios::trunc);
    for (const auto& m : *data.second) masks << truth_to_jsonl(m) << '\n';
    if (!masks) throw ValidationError("cannot write " + (dir / "masks.jsonl").string());
  }

  std::ofstream emb(out / "embeddings.txt", std::ios::trunc);
  emb.precision(9);
  for (const auto& wv : corpus.embeddings) {
    emb << wv.word;
    for (double x : wv.values) emb << ' ' << x;
    emb << '\n';
  }
  if (!emb) throw ValidationError("cannot write " + (out / "embeddings.txt").string());

  nlohmann::ordered_json g;
  g["seed"] = seed;
  g.update(generator_to_json(config));
  std::ofstream gen(out / "generator.json", std::ios::trunc);
  gen << g.dump(2) << '\n';
}

#define SANCL_GENERATOR_FIELDS(X)                                                           \
  X(train_products) X(dev_products) X(test_products) X(reviews_per_product) X(aspect_words) \
  X(aspects_per_product) X(feature_dim) X(embed_dim) X(rois_min) X(rois_max) X(cold_aspect_max)

nlohmann::ordered_json generator_to_json(const GeneratorConfig& c) {
  nlohmann::ordered_json j;
#define X(f) j[#f] = c.f;
  SANCL_GENERATOR_FIELDS(X)
#undef X
  j["no_mention_rate"] = c.no_mention_rate;
  j["visual_noise"] = c.visual_noise;
  return j;
}

void apply_generator_json(GeneratorConfig& c, const nlohmann::json& j, const std::string& source) {
  auto bad = [&](const std::string& key, const std::string& what) {
    throw ConfigError(source + ": key '" + key + "': " + what);
  };
  if (!j.is_object()) throw ConfigError(source + ": top level must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") continue;  // generator.json echoes it
#define X(f)                                                                   \
  if (key == #f) {                                                             \
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)                  \
      bad(key, "expected a non-negative integer");                            \
    c.f = v.get<std::size_t>();                                                \
    continue;                                                                  \
  }
    SANCL_GENERATOR_FIELDS(X)
#undef X
    if (key == "no_mention_rate" || key == "visual_noise") {
      if (!v.is_number()) bad(key, "expected a number");
      (key == "no_mention_rate" ? c.no_mention_rate : c.visual_noise) = v.get<double>();
      continue;
    }
    bad(key, "unknown key");
  }
}

}  // namespace sancl::synth
