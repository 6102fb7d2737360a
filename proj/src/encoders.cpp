// SPDX-License-Identifier: Apache-2.0
#include "sancl/encoders.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "sancl/errors.hpp"

namespace sancl::enc {

namespace {

std::string lower(const std::string& t) {
  std::string s = t;
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

Vocabulary::Vocabulary(const std::vector<std::string>& words) : Vocabulary() {
  for (const auto& w : words) add(lower(w));
}

void Vocabulary::add(const std::string& word) {
  if (index_.emplace(word, words_.size()).second) words_.push_back(word);
}

Vocabulary Vocabulary::from_split(const corpus::DatasetSplit& split) {
  Vocabulary v;
  auto add_all = [&](const std::vector<corpus::Tokens>& sentences) {
    for (const auto& s : sentences)
      for (const auto& t : s) v.add(lower(t));
  };
  for (const auto& p : split.products()) add_all(p.sentences);
  for (const auto& r : split.reviews()) add_all(r.sentences);
  return v;
}

std::size_t Vocabulary::index(const std::string& token) const {
  auto it = index_.find(lower(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocabulary::indices(const corpus::Tokens& tokens) const {
  std::vector<std::size_t> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(index(t));
  return out;
}

bool Vocabulary::contains(const std::string& token) const { return index_.count(lower(token)) > 0; }

EmbeddingTable::EmbeddingTable(Vocabulary vocab, std::size_t dim, Rng& rng)
    : vocab_(std::move(vocab)), weights_("embedding", Matrix(vocab_.size(), dim)) {
  for (std::size_t r = 2; r < vocab_.size(); ++r)
    for (std::size_t c = 0; c < dim; ++c) weights_.value(r, c) = rng.uniform(-0.1, 0.1);
}

EmbeddingTable EmbeddingTable::from_text_file(const std::filesystem::path& path, Vocabulary vocab, Rng& rng,
                                              bool trainable, std::size_t* found) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file " + path.string());
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  std::size_t dim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<double> v;
    for (double x; ls >> x;) v.push_back(x);
    if (!ls.eof()) throw ParseError(path.string(), line_no, "non-numeric vector entry");
    if (v.empty()) throw ParseError(path.string(), line_no, "word without a vector");
    if (dim == 0) dim = v.size();
    if (v.size() != dim) {
      throw ParseError(path.string(), line_no,
                       "vector has " + std::to_string(v.size()) + " entries, expected " + std::to_string(dim));
    }
    rows.emplace_back(std::move(word), std::move(v));
  }
  if (dim == 0) throw ParseError(path.string(), line_no, "embedding file is empty");

  EmbeddingTable table(std::move(vocab), dim, rng);
  table.weights_.trainable = trainable;
  std::size_t hits = 0;
  std::vector<bool> seen(table.vocab_.size(), false);
  for (const auto& [word, v] : rows) {
    if (!table.vocab_.contains(word)) continue;
    const std::size_t r = table.vocab_.index(word);
    if (seen[r]) continue;  // first occurrence wins for case variants
    seen[r] = true;
    ++hits;
    for (std::size_t c = 0; c < dim; ++c) table.weights_.value(r, c) = v[c];
  }
  require_finite(table.weights_.value, "embedding file " + path.string());
  if (found) *found = hits;
  return table;
}

ad::Var EmbeddingTable::embed(const corpus::Tokens& tokens, double dropout, Rng* rng) {
  if (tokens.empty()) throw DomainError("embed: empty token list");
  if (dropout < 0.0 || dropout >= 1.0) throw ParameterError("embed: dropout must be in [0, 1)");
  const auto ids = vocab_.indices(tokens);
  ad::Var e = ad::gather_rows(ad::leaf(weights_), ids);
  if (rng == nullptr || dropout == 0.0) return e;
  Matrix keep(e.rows(), e.cols());
  const double s = 1.0 / (1.0 - dropout);
  for (auto& k : keep.data()) k = rng->bernoulli(dropout) ? 0.0 : s;
  return ad::mul_const(e, keep);
}

TextEncoding encode_text(const ad::Var& embeddings, const GruVars& gru) {
  ad::Var states = gru_sequence(embeddings, gru);
  ad::Var last = ad::take_row(states, states.rows() - 1);
  return {std::move(states), std::move(last)};
}

ad::Var encode_visual(const ad::Var& features, const ad::Var& w_a, const ad::Var& w_v) {
  if (features.rows() == 0) throw ValidationError("encode_visual: no RoI rows in multimodal mode");
  if (features.cols() != w_a.rows()) {
    throw DimensionError("encode_visual: features " + features.value().shape_string() +
                         " do not match attention width " + std::to_string(w_a.rows()));
  }
  return attn::plain_self_attention(features, w_a, w_v);
}

}  // namespace sancl::enc
