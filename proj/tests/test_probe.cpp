#include <doctest.h>

#include <json.hpp>

#include "sancl/errors.hpp"
#include "sancl/grad_check.hpp"
#include "sancl/probe.hpp"
#include "test_util.hpp"

using namespace sancl;
using namespace sancl::probe;
using corpus::ReviewRecord;
using corpus::Span;

namespace {

Tokens split(const std::string& s) {
  Tokens out;
  std::istringstream in(s);
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

ReviewRecord review_of(std::initializer_list<const char*> sentences) {
  ReviewRecord r;
  r.review_id = "r";
  r.product_id = "p";
  for (const char* s : sentences) r.sentences.push_back(split(s));
  return r;
}

std::vector<std::uint8_t> expand(const ReviewRecord& r, std::initializer_list<int> per_sentence) {
  std::vector<std::uint8_t> out;
  auto it = per_sentence.begin();
  for (const auto& s : r.sentences) out.insert(out.end(), s.size(), static_cast<std::uint8_t>(*it++));
  return out;
}

}  // namespace

TEST_CASE("lemmatize strips plural, -ing and -ed") {
  CHECK(lemmatize("Pins") == "pin");
  CHECK(lemmatize("batteries") == "battery");
  CHECK(lemmatize("boxes") == "box");
  CHECK(lemmatize("brushes") == "brush");
  CHECK(lemmatize("glasses") == "glass");
  CHECK(lemmatize("holds") == "hold");
  CHECK(lemmatize("running") == "run");
  CHECK(lemmatize("covered") == "cover");
  CHECK(lemmatize("Blender") == "blender");
  CHECK(lemmatize("bus") == "bus");
  CHECK(lemmatize("this") == "this");
  CHECK(lemmatize("its") == "its");
  CHECK(lemmatize("knives") == "knife");
  CHECK(lemmatize("50/pkg") == "50/pkg");
}

TEST_CASE("extract_core_words") {
  const auto twisty = extract_core_words(split("Twisty Pins for Upholstery , Slipcovers , and Bedskirts 50/pkg"));
  CHECK(std::find(twisty.begin(), twisty.end(), "pin") != twisty.end());
  CHECK(twisty == std::vector<std::string>{"twisty", "pin", "upholstery"});
  CHECK(extract_core_words(split("Twisty Pins for Upholstery, Slipcovers")) ==
        std::vector<std::string>{"twisty", "pin", "upholstery"});
  CHECK(extract_core_words({"Blender"}) == std::vector<std::string>{"blender"});
  CHECK(extract_core_words(split("for the and")).empty());
  CHECK(extract_core_words(split("12 Pack Pins")).empty());

  const Tokens name = split("Stainless Steel Blender with Glass Jar");
  CHECK(extract_core_words(name, NameParse{2}) == std::vector<std::string>{"steel", "blender"});
  CHECK(extract_core_words(name, NameParse{0}) == std::vector<std::string>{"stainless", "steel"});
  CHECK(extract_core_words(name, NameParse{5}) == std::vector<std::string>{"glass", "jar"});
  CHECK_THROWS_AS(extract_core_words(name, NameParse{6}), DomainError);
  CHECK_THROWS_AS(extract_core_words({}), DomainError);
}

TEST_CASE("select_gold_cluster three cases") {
  // "it" in sentence 0; "pin", "these" in sentence 1
  const std::vector<Tokens> sents = {split("it broke ."), split("the pin and these .")};
  const std::vector<Cluster> clusters = {{{0, 0, 1}}, {{1, 1, 2}, {1, 3, 4}}};

  const auto g1 = select_gold_cluster(clusters, sents, {"pin"});
  CHECK(g1.resolution == GoldCase::core_word_match);
  CHECK(g1.index == 1u);
  CHECK(g1.spans == clusters[1]);

  const std::vector<Tokens> pron = {split("it is good and this is fine .")};
  const std::vector<Cluster> only = {{{0, 0, 1}, {0, 4, 5}}};
  const auto g2 = select_gold_cluster(only, pron, {"pin"});
  CHECK(g2.resolution == GoldCase::first_cluster);
  CHECK(g2.index == 0u);
  CHECK(g2.spans == only[0]);

  const auto g3 = select_gold_cluster({}, sents, {"pin"});
  CHECK(g3.resolution == GoldCase::no_clusters);
  CHECK(g3.empty());
  CHECK(!g3.index.has_value());

  // The first of several matching clusters is taken.
  const std::vector<Tokens> two = {split("a pin ."), split("b pin .")};
  const auto g4 = select_gold_cluster({{{0, 1, 2}}, {{1, 1, 2}}}, two, {"pin"});
  CHECK(g4.index == 0u);
}

TEST_CASE("generate_probe_mask") {
  const ReviewRecord sofa = review_of({"I bought these to pin a sofa cover .", "The delivery was late ."});
  GoldCluster gold;
  gold.spans = {{0, 2, 3}};
  const ProbeMask m = generate_probe_mask(sofa, gold);
  CHECK(m.values == expand(sofa, {1, 0}));
  CHECK(m.sentences == std::vector<std::pair<std::size_t, std::size_t>>{{0, 9}, {9, 14}});
  CHECK(m.sentence_values() == std::vector<std::uint8_t>{1, 0});

  CHECK(generate_probe_mask(sofa, GoldCluster{}).values == expand(sofa, {0, 0}));

  gold.spans = {{0, 2, 3}, {1, 0, 2}};
  CHECK(generate_probe_mask(sofa, gold).values == expand(sofa, {1, 1}));

  gold.spans = {{1, 4, 6}};
  CHECK_THROWS_AS(generate_probe_mask(sofa, gold), AnnotationError);
  gold.spans = {{2, 0, 1}};
  CHECK_THROWS_AS(generate_probe_mask(sofa, gold), AnnotationError);
}

TEST_CASE("masks are sentence-constant on random clusters") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    ReviewRecord r;
    const std::size_t ns = 1 + rng.index(5);
    for (std::size_t s = 0; s < ns; ++s) r.sentences.emplace_back(1 + rng.index(7), "w");
    GoldCluster gold;
    const std::size_t spans = rng.index(4);
    std::vector<bool> hot(ns, false);
    for (std::size_t k = 0; k < spans; ++k) {
      const std::size_t s = rng.index(ns);
      const std::size_t start = rng.index(r.sentences[s].size());
      gold.spans.push_back({s, start, start + 1});
      hot[s] = true;
    }
    const ProbeMask m = generate_probe_mask(r, gold);
    REQUIRE(m.size() == r.token_count());
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t i = m.sentences[s].first; i < m.sentences[s].second; ++i) REQUIRE(m.values[i] == hot[s]);
  }
}

TEST_CASE("realize_mask") {
  ProbeMask m;
  m.values = {1, 0};
  CHECK(realize_mask(m, 1.0, 0.5).values == std::vector<double>{1.0, 0.5});
  m.values = {0, 0, 0};
  CHECK(realize_mask(m, 1.0, 0.3).values == std::vector<double>{0.3, 0.3, 0.3});

  CHECK_THROWS_AS(realize_mask(m, 1.0, 1.0), ParameterError);
  CHECK_THROWS_AS(realize_mask(m, 1.0, 0.0), ParameterError);
  CHECK_THROWS_AS(realize_mask(m, 1.1, 0.5), ParameterError);
  CHECK_THROWS_AS(realize_mask(m, 0.4, 0.5), ParameterError);

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    ProbeMask r;
    for (std::size_t i = 0, n = 1 + rng.index(20); i < n; ++i) r.values.push_back(rng.index(2));
    const double alpha = rng.uniform(0.6, 1.0);
    const double beta = rng.uniform(0.01, 0.59);
    const auto real = realize_mask(r, alpha, beta);
    const ad::Var graph = realize_mask(r, alpha, ad::constant_scalar(beta));
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double expect = r.values[i] ? alpha : beta;
      REQUIRE(real.values[i] == expect);
      REQUIRE(graph.value()[i] == expect);
    }
  }
}

TEST_CASE("generate_beta") {
  Parameter w("w_gen", Matrix(4, 1));
  Parameter b("b_gen", Matrix(1, 1));
  const Matrix h = Matrix::from_rows({{0.3, -2.0, 5.0, 1.0}});
  CHECK(generate_beta(ad::constant(h), ad::leaf(w), ad::leaf(b)).scalar() == 0.5);

  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    w.value = testing::random_matrix(rng, 4, 1, 50.0);
    const double beta = generate_beta(ad::constant(testing::random_matrix(rng, 1, 4, 50.0)), ad::leaf(w), ad::leaf(b)).scalar();
    REQUIRE(beta > 0.0);
    REQUIRE(beta < 1.0);
  }

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed);
    w.value = testing::random_matrix(r, 4, 1);
    b.value = testing::random_matrix(r, 1, 1);
    const Matrix hs = testing::random_matrix(r, 1, 4);
    ProbeMask pm;
    pm.values = {1, 0, 0, 1, 0};
    const Matrix weights = testing::random_matrix(r, 1, 5);
    auto loss = [&] {
      const ad::Var beta = generate_beta(ad::constant(hs), ad::leaf(w), ad::leaf(b));
      return ad::dot(realize_mask(pm, 1.0, beta), ad::constant(weights));
    };
    Parameter* params[] = {&w, &b};
    CHECK(grad_check(loss, params).max_relative_error < 1e-5);
  }
}

TEST_CASE("heuristic_annotate") {
  SUBCASE("repeated core word forms one cluster") {
    const auto r = review_of({"The pin is sharp .", "Nice box .", "Every pin holds ."});
    const auto ann = heuristic_annotate(r, {"pin"});
    REQUIRE(ann.clusters.size() == 1);
    CHECK(ann.clusters[0] == Cluster{{0, 1, 2}, {2, 1, 2}});
    CHECK(ann.core_words == std::vector<std::string>{"pin"});
  }
  SUBCASE("pronoun-only review gives one pronoun cluster") {
    const auto r = review_of({"They arrived bent .", "I returned them .", "Meh ."});
    const auto ann = heuristic_annotate(r, {"pin"});
    REQUIRE(ann.clusters.size() == 1);
    CHECK(ann.clusters[0] == Cluster{{0, 0, 1}, {1, 2, 3}});
  }
  SUBCASE("most frequent chain wins and clusters follow first mention") {
    const auto r = review_of({"It is here .", "They work and they hold them .", "It broke , but the pins are ok ."});
    const auto ann = heuristic_annotate(r, {"pin"});
    REQUIRE(ann.clusters.size() == 2);
    CHECK(ann.clusters[0] == Cluster{{1, 0, 1}, {1, 3, 4}, {1, 5, 6}});
    CHECK(ann.clusters[1] == Cluster{{2, 5, 6}});
  }
  SUBCASE("ties go to the chain mentioned first") {
    const auto r = review_of({"She said it works .", "It does , she agrees ."});
    const auto ann = heuristic_annotate(r, {});
    REQUIRE(ann.clusters.size() == 1);
    CHECK(ann.clusters[0] == Cluster{{0, 0, 1}, {1, 3, 4}});
  }
  SUBCASE("demonstrative determiners are skipped") {
    const auto r = review_of({"This sofa is old .", "I like this ."});
    CHECK(heuristic_annotate(r, {}).clusters.empty());
  }
  SUBCASE("deterministic") {
    const auto r = review_of({"They came .", "The pins and them .", "pins !"});
    CHECK(heuristic_annotate(r, {"pin"}) == heuristic_annotate(r, {"pin"}));
  }
}

TEST_CASE("handcrafted oracle corpus yields the hand-derived masks") {
  const auto dir = std::filesystem::path(SANCL_TEST_DATA) / "probe_oracle";
  const auto split = corpus::load_corpus(dir, {corpus::Modality::text_only});
  std::ifstream in(dir / "expected_masks.jsonl");
  std::size_t cases = 0;
  for (std::string line; std::getline(in, line);) {
    const auto j = nlohmann::json::parse(line);
    const std::string id = j.at("review_id");
    INFO(id << ": " << j.at("case").get<std::string>());
    const auto& reviews = split.reviews();
    const auto it = std::find_if(reviews.begin(), reviews.end(), [&](const auto& r) { return r.review_id == id; });
    REQUIRE(it != reviews.end());
    const ProbeMask m = build_probe_mask(*it, split.product(it->product_id), split.annotation_for(id));
    CHECK(m.values == j.at("mask").get<std::vector<std::uint8_t>>());
    ++cases;
  }
  CHECK(cases == 12);
}

TEST_CASE("heuristic annotator against reference annotations") {
  const std::filesystem::path dir = SANCL_TEST_DATA "/annotation_fixture";
  const auto split = corpus::load_corpus_files(dir / "products.jsonl", dir / "reviews.jsonl", dir / "annotations.jsonl",
                                               {corpus::Modality::text_only});
  REQUIRE(split.reviews().size() == 50);
  Agreement total;
  std::size_t annotated = 0;
  for (const auto& r : split.reviews()) {
    const auto* ann = split.annotation_for(r.review_id);
    REQUIRE(ann != nullptr);
    annotated += !ann->clusters.empty();
    const auto& product = split.product(r.product_id);
    const auto reference = build_probe_mask(r, product, ann);
    const auto heuristic = build_probe_mask(r, product, nullptr);
    total += sentence_agreement(reference, heuristic);
    // Heuristic output is itself a valid annotation for the loader.
    const auto h = heuristic_annotate(r, extract_core_words(product.name));
    CHECK_NOTHROW(corpus::parse_annotation(corpus::to_jsonl(h), "heuristic", 1));
  }
  CHECK(annotated > 20);
  CHECK(annotated < 50);
  MESSAGE("sentence agreement " << total.agreeing << "/" << total.total);
  CHECK(total.total > 100);
  CHECK(total.rate() >= 0.80);
}
