// SPDX-License-Identifier: Apache-2.0
#include "sancl/contrastive.hpp"

#include <cmath>

#include "sancl/errors.hpp"

namespace sancl::cpc {

ProjectionHead::ProjectionHead(const std::string& prefix, std::size_t in_dim, std::size_t shared_dim)
    : w1(prefix + ".w1", Matrix(in_dim, shared_dim)),
      b1(prefix + ".b1", Matrix(1, shared_dim)),
      w2(prefix + ".w2", Matrix(shared_dim, shared_dim)),
      b2(prefix + ".b2", Matrix(1, shared_dim)) {}

ad::Var project(const ad::Var& s, ProjectionHead& head) {
  const ad::Var hidden = ad::tanh(ad::add(ad::matmul(s, ad::leaf(head.w1)), ad::leaf(head.b1)));
  return ad::add(ad::matmul(hidden, ad::leaf(head.w2)), ad::leaf(head.b2));
}

ad::Var log_score(const ad::Var& a, const ad::Var& b, double tau) {
  if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
  const ad::Var c = ad::dot(ad::l2_normalize(a), ad::l2_normalize(b));
  return tau == 1.0 ? c : ad::scale(c, 1.0 / tau);
}

ad::Var score(const ad::Var& a, const ad::Var& b, double tau) { return ad::exp(log_score(a, b, tau)); }

std::size_t PairSets::pr_positive_count(bool image) const {
  std::size_t n = 0;
  for (const auto& g : image ? pr_image : pr_text) n += g.positive.size();
  return n;
}

std::size_t PairSets::pr_negative_count(bool image) const {
  std::size_t n = 0;
  for (const auto& g : image ? pr_image : pr_text) n += g.negative.size();
  return n;
}

PairSets build_pair_sets(const std::vector<ProductView>& batch, const Thresholds& th, bool with_images) {
  if (th.low >= th.high) throw ParameterError("contrastive thresholds need low < high");
  PairSets sets;
  for (const auto& p : batch) {
    if (with_images) sets.ii_product.push_back({p.text_ii, p.image_ii, p.id});
    PrGroup text, image;
    for (const auto& r : p.reviews) {
      const bool pos = r.score >= th.high;
      const bool neg = r.score <= th.low;
      if (!pos && !neg) continue;
      if (with_images) (pos ? sets.ii_positive : sets.ii_negative).push_back({r.text_ii, r.image_ii, r.id});
      (pos ? text.positive : text.negative).push_back({r.text_pr, p.text_pr, r.id});
      if (with_images) {
        const ad::Var& prod = r.product_image_pr.valid() ? r.product_image_pr : p.image_pr;
        (pos ? image.positive : image.negative).push_back({r.image_pr, prod, r.id});
      }
    }
    sets.pr_text.push_back(std::move(text));
    if (with_images) sets.pr_image.push_back(std::move(image));
  }
  return sets;
}

namespace {

// sum over `targets` of (logsumexp(universe) - logit(target)), or 0.
ad::Var nce(const std::vector<const Pair*>& targets, const std::vector<const Pair*>& universe, double tau) {
  if (targets.empty()) return ad::constant_scalar(0.0);
  std::vector<ad::Var> logits;
  logits.reserve(universe.size());
  for (const Pair* p : universe) logits.push_back(log_score(p->a, p->b, tau));
  const ad::Var lse = ad::logsumexp(ad::stack_scalars(logits));
  // targets are the leading entries of universe
  ad::Var total;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const ad::Var term = ad::sub(lse, logits[k]);
    total = total.valid() ? ad::add(total, term) : term;
  }
  return total;
}

ad::Var pr_loss(const std::vector<PrGroup>& groups, double tau) {
  ad::Var total = ad::constant_scalar(0.0);
  for (const auto& g : groups) {
    std::vector<const Pair*> targets, universe;
    for (const auto& p : g.positive) targets.push_back(&p);
    universe = targets;
    for (const auto& p : g.negative) universe.push_back(&p);
    if (!targets.empty()) total = ad::add(total, nce(targets, universe, tau));
  }
  return total;
}

}  // namespace

ad::Var cpc_inner_instance(const PairSets& sets, double tau) {
  std::vector<const Pair*> targets, universe;
  for (const auto& p : sets.ii_positive) targets.push_back(&p);
  for (const auto& p : sets.ii_product) targets.push_back(&p);
  universe = targets;
  for (const auto& p : sets.ii_negative) universe.push_back(&p);
  return nce(targets, universe, tau);
}

CpcLosses cpc_product_review(const PairSets& sets, double tau) {
  CpcLosses out;
  out.cpc_pr_t = pr_loss(sets.pr_text, tau);
  out.cpc_pr_v = pr_loss(sets.pr_image, tau);
  out.cpc_pr = ad::add(out.cpc_pr_t, out.cpc_pr_v);
  return out;
}

double pair_probability(const Pair& pair, const std::vector<Pair>& universe, double tau) {
  double mx = -INFINITY;
  std::vector<double> logits;
  for (const auto& p : universe) {
    logits.push_back(log_score(p.a, p.b, tau).scalar());
    mx = std::max(mx, logits.back());
  }
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  return std::exp(log_score(pair.a, pair.b, tau).scalar() - mx) / z;
}

}  // namespace sancl::cpc
