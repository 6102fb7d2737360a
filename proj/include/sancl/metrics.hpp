// SPDX-License-Identifier: Apache-2.0
#pragma once

// Ranking metrics over each product's review list.

#include <optional>
#include <string>
#include <vector>

namespace sancl::metrics {

struct RankedItem {
  std::string id;  // review_id; breaks prediction ties (ascending)
  double prediction = 0.0;
  int gold = 0;
};

/// Indices of `items` from highest to lowest prediction, ties by id.
std::vector<std::size_t> rank_order(const std::vector<RankedItem>& items);

/// Average precision with relevant = gold >= threshold; nullopt when the list
/// has no relevant item.
std::optional<double> average_precision(const std::vector<RankedItem>& items, int relevance_threshold = 1);

/// DCG@n / IDCG@n with gain 2^gold - 1 and discount log2(rank + 1); 0 when
/// every gold score is 0.
double ndcg_at(const std::vector<RankedItem>& items, std::size_t n);

struct ProductMetrics {
  std::string product_id;
  std::optional<double> ap;
  double ndcg3 = 0.0;
  double ndcg5 = 0.0;
};

struct MetricReport {
  double map = 0.0;
  double ndcg3 = 0.0;
  double ndcg5 = 0.0;
  std::size_t products = 0;
  std::size_t excluded_no_relevant = 0;  // products left out of MAP
  std::size_t zero_gain_products = 0;    // products whose NDCG is defined as 0
  int relevance_threshold = 1;
  std::vector<ProductMetrics> per_product;

  std::string to_json(bool with_products = false) const;
  std::string to_csv() const;
};

struct ProductRanking {
  std::string product_id;
  std::vector<RankedItem> items;
};

MetricReport evaluate(const std::vector<ProductRanking>& rankings, int relevance_threshold = 1);

/// MAP recomputed from the definition: for every relevant review, count the
/// relevant reviews ranked at or above it. Independent of average_precision().
double brute_force_map(const std::vector<ProductRanking>& rankings, int relevance_threshold = 1);

}  // namespace sancl::metrics
