// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sancl/matrix.hpp"

namespace sancl::corpus {

using Tokens = std::vector<std::string>;

struct ProductRecord {
  std::string product_id;
  Tokens name;
  std::vector<Tokens> sentences;  // description text
  std::string features_path;      // relative to the split directory; empty = none
  Matrix visual_features;         // n x d RoI rows

  std::size_t token_count() const;
};

struct ReviewRecord {
  std::string review_id;
  std::string product_id;
  std::vector<Tokens> sentences;
  std::string features_path;
  Matrix visual_features;
  std::int64_t votes = 0;
  int helpfulness = 0;  // 0..4

  std::size_t token_count() const;
  Tokens flat_tokens() const;
};

/// Token span inside one review sentence; `end` is exclusive.
struct Span {
  std::size_t sentence = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

using Cluster = std::vector<Span>;

struct AnnotationRecord {
  std::string review_id;
  std::vector<std::string> core_words;
  std::vector<Cluster> clusters;
  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

/// One product together with the indices of its reviews in DatasetSplit::reviews.
struct ProductGroup {
  std::size_t product;
  std::vector<std::size_t> reviews;
};

/// Products, reviews and annotations of one split, validated and indexed.
class DatasetSplit {
 public:
  DatasetSplit() = default;
  DatasetSplit(std::vector<ProductRecord> products, std::vector<ReviewRecord> reviews,
               std::vector<AnnotationRecord> annotations);

  const std::vector<ProductRecord>& products() const { return products_; }
  const std::vector<ReviewRecord>& reviews() const { return reviews_; }
  const std::vector<AnnotationRecord>& annotations() const { return annotations_; }
  /// Groups in product file order; reviews in review file order.
  const std::vector<ProductGroup>& groups() const { return groups_; }

  const ProductRecord& product(const std::string& id) const;
  const AnnotationRecord* annotation_for(const std::string& review_id) const;
  bool empty() const { return products_.empty(); }

  /// Copy keeping only products with at least two reviews of distinct
  /// helpfulness; `dropped` receives the number removed.
  DatasetSplit retain_rankable(std::size_t* dropped = nullptr) const;

  friend bool operator==(const DatasetSplit& a, const DatasetSplit& b) {
    return a.products_ == b.products_ && a.reviews_ == b.reviews_ && a.annotations_ == b.annotations_;
  }

 private:
  void index();

  std::vector<ProductRecord> products_;
  std::vector<ReviewRecord> reviews_;
  std::vector<AnnotationRecord> annotations_;
  std::vector<ProductGroup> groups_;
  std::map<std::string, std::size_t> product_index_;
  std::map<std::string, std::size_t> annotation_index_;
};

bool operator==(const ProductRecord& a, const ProductRecord& b);
bool operator==(const ReviewRecord& a, const ReviewRecord& b);

/// 0 when votes <= 1, otherwise floor(log2 votes) clipped to 4.
int label_from_votes(std::int64_t votes);

enum class Modality { text_only, multimodal };

struct LoadOptions {
  Modality mode = Modality::multimodal;
};

/// Reads products.jsonl, reviews.jsonl and (if present) annotations.jsonl
/// from `dir`. Feature paths resolve relative to `dir`.
DatasetSplit load_corpus(const std::filesystem::path& dir, const LoadOptions& options = {});
/// Same from explicit files; feature paths resolve next to each file. An
/// empty `annotations` path means none.
DatasetSplit load_corpus_files(const std::filesystem::path& products, const std::filesystem::path& reviews,
                               const std::filesystem::path& annotations, const LoadOptions& options = {});

/// Writes the three JSONL files and every referenced feature file.
void save_corpus(const DatasetSplit& split, const std::filesystem::path& dir);

/// Canonical one-line JSON for each record type (schema key order).
std::string to_jsonl(const ProductRecord& p);
std::string to_jsonl(const ReviewRecord& r);
std::string to_jsonl(const AnnotationRecord& a);

/// Binary RoI feature file: "SFV1", u32 n, u32 d, n*d float32, little-endian.
Matrix load_features(const std::filesystem::path& path, bool allow_empty = false);
void save_features(const Matrix& features, const std::filesystem::path& path);

/// Parse one JSONL annotation line (exposed for the probe CLI and tests).
AnnotationRecord parse_annotation(const std::string& line, const std::string& file = "<memory>",
                                  std::size_t line_no = 1);

}  // namespace sancl::corpus
