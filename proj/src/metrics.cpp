// SPDX-License-Identifier: Apache-2.0
#include "sancl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "sancl/errors.hpp"

namespace sancl::metrics {

std::vector<std::size_t> rank_order(const std::vector<RankedItem>& items) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (items[a].prediction != items[b].prediction) return items[a].prediction > items[b].prediction;
    return items[a].id < items[b].id;
  });
  return order;
}

std::optional<double> average_precision(const std::vector<RankedItem>& items, int relevance_threshold) {
  if (items.empty()) throw DomainError("average_precision: empty ranking");
  const auto order = rank_order(items);
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (items[order[k]].gold < relevance_threshold) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

namespace {

double dcg(const std::vector<int>& gold_in_rank_order, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < std::min(n, gold_in_rank_order.size()); ++k)
    s += (std::exp2(gold_in_rank_order[k]) - 1.0) / std::log2(static_cast<double>(k + 2));
  return s;
}

}  // namespace

double ndcg_at(const std::vector<RankedItem>& items, std::size_t n) {
  if (items.empty()) throw DomainError("ndcg_at: empty ranking");
  std::vector<int> ranked;
  for (std::size_t i : rank_order(items)) ranked.push_back(items[i].gold);
  std::vector<int> ideal = ranked;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal, n);
  if (idcg == 0.0) return 0.0;
  return dcg(ranked, n) / idcg;
}

MetricReport evaluate(const std::vector<ProductRanking>& rankings, int relevance_threshold) {
  MetricReport r;
  r.relevance_threshold = relevance_threshold;
  double ap_sum = 0.0;
  std::size_t ap_n = 0;
  for (const auto& pr : rankings) {
    ProductMetrics m;
    m.product_id = pr.product_id;
    m.ap = average_precision(pr.items, relevance_threshold);
    m.ndcg3 = ndcg_at(pr.items, 3);
    m.ndcg5 = ndcg_at(pr.items, 5);
    if (m.ap) {
      ap_sum += *m.ap;
      ++ap_n;
    } else {
      ++r.excluded_no_relevant;
    }
    if (std::all_of(pr.items.begin(), pr.items.end(), [](const RankedItem& it) { return it.gold == 0; }))
      ++r.zero_gain_products;
    r.ndcg3 += m.ndcg3;
    r.ndcg5 += m.ndcg5;
    r.per_product.push_back(std::move(m));
  }
  r.products = rankings.size();
  if (ap_n > 0) r.map = ap_sum / static_cast<double>(ap_n);
  if (!rankings.empty()) {
    r.ndcg3 /= static_cast<double>(rankings.size());
    r.ndcg5 /= static_cast<double>(rankings.size());
  }
  return r;
}

double brute_force_map(const std::vector<ProductRanking>& rankings, int relevance_threshold) {
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& pr : rankings) {
    const auto& items = pr.items;
    // rank of i = 1 + number of items placed strictly before it
    auto before = [&](const RankedItem& a, const RankedItem& b) {
      return a.prediction > b.prediction || (a.prediction == b.prediction && a.id < b.id);
    };
    double ap = 0.0;
    std::size_t relevant = 0;
    for (const auto& it : items) {
      if (it.gold < relevance_threshold) continue;
      ++relevant;
      std::size_t rank = 1, rel_at_or_above = 1;
      for (const auto& other : items) {
        if (&other == &it || !before(other, it)) continue;
        ++rank;
        if (other.gold >= relevance_threshold) ++rel_at_or_above;
      }
      ap += static_cast<double>(rel_at_or_above) / static_cast<double>(rank);
    }
    if (relevant == 0) continue;
    total += ap / static_cast<double>(relevant);
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

std::string MetricReport::to_json(bool with_products) const {
  nlohmann::ordered_json j;
  j["map"] = map;
  j["ndcg3"] = ndcg3;
  j["ndcg5"] = ndcg5;
  j["products"] = products;
  j["excluded_no_relevant"] = excluded_no_relevant;
  j["zero_gain_products"] = zero_gain_products;
  j["relevance_threshold"] = relevance_threshold;
  if (with_products) {
    auto& arr = j["per_product"] = nlohmann::ordered_json::array();
    for (const auto& p : per_product) {
      nlohmann::ordered_json e;
      e["product_id"] = p.product_id;
      e["ap"] = p.ap ? nlohmann::ordered_json(*p.ap) : nlohmann::ordered_json(nullptr);
      e["ndcg3"] = p.ndcg3;
      e["ndcg5"] = p.ndcg5;
      arr.push_back(std::move(e));
    }
  }
  return j.dump();
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "product_id,ap,ndcg3,ndcg5\n";
  for (const auto& p : per_product) {
    out << p.product_id << ',';
    if (p.ap) out << *p.ap;
    out << ',' << p.ndcg3 << ',' << p.ndcg5 << '\n';
  }
  return out.str();
}

}  // namespace sancl::metrics
