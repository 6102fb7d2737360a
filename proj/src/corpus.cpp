// SPDX-License-Identifier: Apache-2.0
#include "sancl/corpus.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sancl/binio.hpp"
#include "sancl/errors.hpp"

namespace sancl::corpus {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::size_t count_tokens(const std::vector<Tokens>& sentences) {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

}  // namespace

std::size_t ProductRecord::token_count() const { return count_tokens(sentences); }
std::size_t ReviewRecord::token_count() const { return count_tokens(sentences); }

Tokens ReviewRecord::flat_tokens() const {
  Tokens out;
  out.reserve(token_count());
  for (const auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

bool operator==(const ProductRecord& a, const ProductRecord& b) {
  return a.product_id == b.product_id && a.name == b.name && a.sentences == b.sentences &&
         a.features_path == b.features_path && a.visual_features == b.visual_features;
}

bool operator==(const ReviewRecord& a, const ReviewRecord& b) {
  return a.review_id == b.review_id && a.product_id == b.product_id &&
         a.sentences == b.sentences && a.features_path == b.features_path &&
         a.visual_features == b.visual_features && a.votes == b.votes &&
         a.helpfulness == b.helpfulness;
}

int label_from_votes(std::int64_t votes) {
  if (votes < 0) throw ValidationError("votes must be non-negative, got " + std::to_string(votes));
  if (votes <= 1) return 0;
  int level = 0;
  for (std::int64_t v = votes; v > 1; v >>= 1) ++level;  // floor(log2 votes)
  return level > 4 ? 4 : level;
}

// ---------------------------------------------------------------------------
// DatasetSplit

DatasetSplit::DatasetSplit(std::vector<ProductRecord> products, std::vector<ReviewRecord> reviews,
                           std::vector<AnnotationRecord> annotations)
    : products_(std::move(products)), reviews_(std::move(reviews)),
      annotations_(std::move(annotations)) {
  index();
}

void DatasetSplit::index() {
  product_index_.clear();
  annotation_index_.clear();
  groups_.clear();
  for (std::size_t i = 0; i < products_.size(); ++i) {
    const auto& p = products_[i];
    if (p.sentences.empty()) {
      throw ValidationError("product " + p.product_id + " has no description sentences");
    }
    if (!product_index_.emplace(p.product_id, i).second) {
      throw ValidationError("duplicate product_id " + p.product_id);
    }
    groups_.push_back({i, {}});
  }
  std::set<std::string> review_ids;
  std::map<std::string, const ReviewRecord*> by_id;
  for (std::size_t i = 0; i < reviews_.size(); ++i) {
    const auto& r = reviews_[i];
    if (!review_ids.insert(r.review_id).second) {
      throw ValidationError("duplicate review_id " + r.review_id);
    }
    auto it = product_index_.find(r.product_id);
    if (it == product_index_.end()) {
      throw ReferentialError("review " + r.review_id + " references unknown product_id " +
                             r.product_id);
    }
    if (r.helpfulness < 0 || r.helpfulness > 4) {
      throw ValidationError("review " + r.review_id + " helpfulness out of range");
    }
    if (r.sentences.empty() || r.token_count() == 0) {
      throw ValidationError("review " + r.review_id + " has no tokens");
    }
    groups_[it->second].reviews.push_back(i);
    by_id[r.review_id] = &r;
  }
  for (std::size_t i = 0; i < annotations_.size(); ++i) {
    const auto& a = annotations_[i];
    auto it = by_id.find(a.review_id);
    if (it == by_id.end()) {
      throw ReferentialError("annotation references unknown review_id " + a.review_id);
    }
    if (!annotation_index_.emplace(a.review_id, i).second) {
      throw ValidationError("duplicate annotation for review_id " + a.review_id);
    }
    const auto& sents = it->second->sentences;
    for (const auto& cluster : a.clusters) {
      for (const auto& span : cluster) {
        if (span.sentence >= sents.size() || span.start >= span.end ||
            span.end > sents[span.sentence].size()) {
          throw AnnotationError("annotation for " + a.review_id + " has out-of-bounds span [" +
                                std::to_string(span.sentence) + "," + std::to_string(span.start) +
                                "," + std::to_string(span.end) + "]");
        }
      }
    }
  }
}

const ProductRecord& DatasetSplit::product(const std::string& id) const {
  auto it = product_index_.find(id);
  if (it == product_index_.end()) throw ReferentialError("unknown product_id " + id);
  return products_[it->second];
}

const AnnotationRecord* DatasetSplit::annotation_for(const std::string& review_id) const {
  auto it = annotation_index_.find(review_id);
  return it == annotation_index_.end() ? nullptr : &annotations_[it->second];
}

DatasetSplit DatasetSplit::retain_rankable(std::size_t* dropped) const {
  std::set<std::string> keep;
  for (const auto& g : groups_) {
    std::set<int> scores;
    for (std::size_t r : g.reviews) scores.insert(reviews_[r].helpfulness);
    if (g.reviews.size() >= 2 && scores.size() >= 2) keep.insert(products_[g.product].product_id);
  }
  std::vector<ProductRecord> products;
  std::vector<ReviewRecord> reviews;
  std::vector<AnnotationRecord> annotations;
  std::set<std::string> kept_reviews;
  for (const auto& p : products_)
    if (keep.count(p.product_id)) products.push_back(p);
  for (const auto& r : reviews_)
    if (keep.count(r.product_id)) {
      reviews.push_back(r);
      kept_reviews.insert(r.review_id);
    }
  for (const auto& a : annotations_)
    if (kept_reviews.count(a.review_id)) annotations.push_back(a);
  if (dropped) *dropped = products_.size() - products.size();
  return DatasetSplit(std::move(products), std::move(reviews), std::move(annotations));
}

// ---------------------------------------------------------------------------
// JSON

namespace {

struct LineContext {
  const std::string& file;
  std::size_t line;
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(file, line, what); }
};

const json& require(const json& obj, const char* key, const LineContext& ctx) {
  auto it = obj.find(key);
  if (it == obj.end()) ctx.fail(std::string("missing required field '") + key + "'");
  return *it;
}

std::string get_string(const json& obj, const char* key, const LineContext& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_string()) ctx.fail(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

Tokens get_tokens(const json& v, const char* key, const LineContext& ctx) {
  if (!v.is_array()) ctx.fail(std::string("field '") + key + "' must be an array of tokens");
  Tokens out;
  for (const auto& t : v) {
    if (!t.is_string()) ctx.fail(std::string("field '") + key + "' must contain only strings");
    out.push_back(t.get<std::string>());
  }
  return out;
}

std::vector<Tokens> get_sentences(const json& obj, const LineContext& ctx) {
  const json& v = require(obj, "sentences", ctx);
  if (!v.is_array()) ctx.fail("field 'sentences' must be an array of token arrays");
  std::vector<Tokens> out;
  for (const auto& s : v) out.push_back(get_tokens(s, "sentences", ctx));
  return out;
}

std::string get_features_path(const json& obj, const LineContext& ctx) {
  auto it = obj.find("features_path");
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) ctx.fail("field 'features_path' must be a string or null");
  return it->get<std::string>();
}

json parse_object(const std::string& line, const LineContext& ctx) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    ctx.fail(std::string("invalid JSON: ") + e.what());
  }
  if (!obj.is_object()) ctx.fail("record must be a JSON object");
  return obj;
}

template <typename F>
void for_each_line(const fs::path& path, F&& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(line, no);
  }
}

Matrix features_for(const std::string& rel, const fs::path& dir, const LoadOptions& opt,
                    const std::string& owner) {
  if (opt.mode == Modality::text_only) return {};
  if (rel.empty()) {
    throw ValidationError(owner + " has no features_path but the corpus is loaded in multimodal mode");
  }
  Matrix m = load_features(dir / rel, false);
  return m;
}

}  // namespace

AnnotationRecord parse_annotation(const std::string& line, const std::string& file,
                                  std::size_t line_no) {
  const LineContext ctx{file, line_no};
  const json obj = parse_object(line, ctx);
  AnnotationRecord a;
  a.review_id = get_string(obj, "review_id", ctx);
  a.core_words = get_tokens(require(obj, "core_words", ctx), "core_words", ctx);
  const json& clusters = require(obj, "clusters", ctx);
  if (!clusters.is_array()) ctx.fail("field 'clusters' must be an array");
  for (const auto& c : clusters) {
    if (!c.is_array()) ctx.fail("each cluster must be an array of [sentence,start,end] spans");
    Cluster cluster;
    for (const auto& s : c) {
      if (!s.is_array() || s.size() != 3 || !s[0].is_number_unsigned() ||
          !s[1].is_number_unsigned() || !s[2].is_number_unsigned()) {
        ctx.fail("span must be [sentence,start,end] of non-negative integers");
      }
      cluster.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>(), s[2].get<std::size_t>()});
    }
    a.clusters.push_back(std::move(cluster));
  }
  return a;
}

DatasetSplit load_corpus(const fs::path& dir, const LoadOptions& options) {
  if (!fs::is_directory(dir)) throw Error("corpus directory not found: " + dir.string());
  const fs::path afile = dir / "annotations.jsonl";
  return load_corpus_files(dir / "products.jsonl", dir / "reviews.jsonl", fs::exists(afile) ? afile : fs::path(),
                           options);
}

DatasetSplit load_corpus_files(const fs::path& pfile, const fs::path& rfile, const fs::path& afile,
                               const LoadOptions& options) {
  std::vector<ProductRecord> products;
  std::vector<ReviewRecord> reviews;
  std::vector<AnnotationRecord> annotations;

  const std::string pname = pfile.string();
  for_each_line(pfile, [&](const std::string& line, std::size_t no) {
    const LineContext ctx{pname, no};
    const json obj = parse_object(line, ctx);
    ProductRecord p;
    p.product_id = get_string(obj, "product_id", ctx);
    p.name = get_tokens(require(obj, "name", ctx), "name", ctx);
    p.sentences = get_sentences(obj, ctx);
    p.features_path = get_features_path(obj, ctx);
    try {
      p.visual_features = features_for(p.features_path, pfile.parent_path(), options, "product " + p.product_id);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      ctx.fail(e.what());
    }
    products.push_back(std::move(p));
  });

  const std::string rname = rfile.string();
  for_each_line(rfile, [&](const std::string& line, std::size_t no) {
    const LineContext ctx{rname, no};
    const json obj = parse_object(line, ctx);
    ReviewRecord r;
    r.review_id = get_string(obj, "review_id", ctx);
    r.product_id = get_string(obj, "product_id", ctx);
    r.sentences = get_sentences(obj, ctx);
    r.features_path = get_features_path(obj, ctx);
    const json& votes = require(obj, "votes", ctx);
    if (!votes.is_number_integer()) ctx.fail("field 'votes' must be an integer");
    r.votes = votes.get<std::int64_t>();
    if (r.votes < 0) ctx.fail("field 'votes' must be non-negative");
    r.helpfulness = label_from_votes(r.votes);
    if (auto it = obj.find("helpfulness"); it != obj.end() && !it->is_null()) {
      if (!it->is_number_integer()) ctx.fail("field 'helpfulness' must be an integer");
      if (it->get<int>() != r.helpfulness) {
        ctx.fail("helpfulness " + std::to_string(it->get<int>()) + " disagrees with votes " +
                 std::to_string(r.votes) + " (expected " + std::to_string(r.helpfulness) + ")");
      }
    }
    try {
      r.visual_features = features_for(r.features_path, rfile.parent_path(), options, "review " + r.review_id);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      ctx.fail(e.what());
    }
    reviews.push_back(std::move(r));
  });

  if (!afile.empty()) {
    const std::string aname = afile.string();
    for_each_line(afile, [&](const std::string& line, std::size_t no) {
      annotations.push_back(parse_annotation(line, aname, no));
    });
  }
  return DatasetSplit(std::move(products), std::move(reviews), std::move(annotations));
}

namespace {

ordered_json sentences_json(const std::vector<Tokens>& sentences) {
  ordered_json arr = ordered_json::array();
  for (const auto& s : sentences) arr.push_back(s);
  return arr;
}

ordered_json path_json(const std::string& p) { return p.empty() ? ordered_json(nullptr) : ordered_json(p); }

}  // namespace

std::string to_jsonl(const ProductRecord& p) {
  ordered_json j;
  j["product_id"] = p.product_id;
  j["name"] = p.name;
  j["sentences"] = sentences_json(p.sentences);
  j["features_path"] = path_json(p.features_path);
  return j.dump();
}

std::string to_jsonl(const ReviewRecord& r) {
  ordered_json j;
  j["review_id"] = r.review_id;
  j["product_id"] = r.product_id;
  j["sentences"] = sentences_json(r.sentences);
  j["features_path"] = path_json(r.features_path);
  j["votes"] = r.votes;
  j["helpfulness"] = r.helpfulness;
  return j.dump();
}

std::string to_jsonl(const AnnotationRecord& a) {
  ordered_json j;
  j["review_id"] = a.review_id;
  j["core_words"] = a.core_words;
  ordered_json clusters = ordered_json::array();
  for (const auto& c : a.clusters) {
    ordered_json cj = ordered_json::array();
    for (const auto& s : c) cj.push_back({s.sentence, s.start, s.end});
    clusters.push_back(std::move(cj));
  }
  j["clusters"] = std::move(clusters);
  return j.dump();
}

void save_corpus(const DatasetSplit& split, const fs::path& dir) {
  fs::create_directories(dir);
  auto write_lines = [&](const fs::path& file, const auto& records) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + file.string());
    for (const auto& rec : records) out << to_jsonl(rec) << '\n';
  };
  write_lines(dir / "products.jsonl", split.products());
  write_lines(dir / "reviews.jsonl", split.reviews());
  write_lines(dir / "annotations.jsonl", split.annotations());
  for (const auto& p : split.products())
    if (!p.features_path.empty() && p.visual_features.rows() > 0)
      save_features(p.visual_features, dir / p.features_path);
  for (const auto& r : split.reviews())
    if (!r.features_path.empty() && r.visual_features.rows() > 0)
      save_features(r.visual_features, dir / r.features_path);
}

// ---------------------------------------------------------------------------
// Feature files

namespace {
constexpr char kFeatureMagic[4] = {'S', 'F', 'V', '1'};
}

Matrix load_features(const fs::path& path, bool allow_empty) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptionError("cannot open feature file " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != std::string(kFeatureMagic, 4)) {
    throw CorruptionError(path.string() + ": bad magic, expected SFV1");
  }
  std::uint32_t n = 0, d = 0;
  if (!binio::read_u32(in, n) || !binio::read_u32(in, d)) {
    throw CorruptionError(path.string() + ": truncated header");
  }
  const auto payload = static_cast<std::uint64_t>(fs::file_size(path)) - 12;
  const std::uint64_t expected = static_cast<std::uint64_t>(n) * d * 4;
  if (payload != expected) {
    throw CorruptionError(path.string() + ": header declares " + std::to_string(n) + "x" +
                          std::to_string(d) + " (" + std::to_string(expected) +
                          " bytes) but payload has " + std::to_string(payload) + " bytes");
  }
  if (n == 0 && !allow_empty) {
    throw CorruptionError(path.string() + ": feature file has no rows (allowed only in text-only mode)");
  }
  Matrix m(n, d);
  for (std::size_t i = 0; i < m.size(); ++i) {
    float f = 0.0f;
    if (!binio::read_f32(in, f)) throw CorruptionError(path.string() + ": truncated payload");
    if (!std::isfinite(f)) {
      throw CorruptionError(path.string() + ": non-finite value at index " + std::to_string(i));
    }
    m[i] = f;
  }
  return m;
}

void save_features(const Matrix& features, const fs::path& path) {
  require_finite(features, "feature matrix");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kFeatureMagic, 4);
  binio::write_u32(out, static_cast<std::uint32_t>(features.rows()));
  binio::write_u32(out, static_cast<std::uint32_t>(features.cols()));
  for (double v : features.data()) binio::write_f32(out, static_cast<float>(v));
}

}  // namespace sancl::corpus
