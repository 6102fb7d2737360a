// SPDX-License-Identifier: Apache-2.0
#pragma once

// Contrastive losses over projected field representations. Two shared spaces:
// inner-instance (ii: text <-> image of one product or review) and
// product-review (pr: review <-> its product, per modality).

#include <optional>
#include <string>
#include <vector>

#include "sancl/autograd.hpp"

namespace sancl::cpc {

/// Affine -> tanh -> affine, d_h -> d_s -> d_s.
struct ProjectionHead {
  Parameter w1, b1, w2, b2;
  ProjectionHead(const std::string& prefix, std::size_t in_dim, std::size_t shared_dim);
  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

/// s is 1 x d_h; result 1 x d_s.
ad::Var project(const ad::Var& s, ProjectionHead& head);

/// exp(cos(a, b) / tau). Throws DegenerateInputError for near-zero vectors.
ad::Var score(const ad::Var& a, const ad::Var& b, double tau = 1.0);
/// cos(a, b) / tau, the log of score().
ad::Var log_score(const ad::Var& a, const ad::Var& b, double tau = 1.0);

struct Thresholds {
  int high = 3;  // score >= high: positive
  int low = 1;   // score <= low: negative
};

/// Projected representations of one review.
struct ReviewView {
  std::string id;
  int score = 0;
  ad::Var text_ii, image_ii, text_pr, image_pr;  // image_* invalid in text-only mode
  /// Product side of the image pr pair when it was attended with this review;
  /// falls back to ProductView::image_pr when invalid.
  ad::Var product_image_pr;
};

/// Projected representations of one product with its reviews.
struct ProductView {
  std::string id;
  ad::Var text_ii, image_ii, text_pr, image_pr;
  std::vector<ReviewView> reviews;
};

struct Pair {
  ad::Var a, b;
  std::string id;  // review or product id
};

/// The product-review sets of one product for one modality.
struct PrGroup {
  std::vector<Pair> positive, negative;
};

struct PairSets {
  std::vector<Pair> ii_positive, ii_negative, ii_product;
  std::vector<PrGroup> pr_text, pr_image;  // one group per product

  std::size_t pr_positive_count(bool image) const;
  std::size_t pr_negative_count(bool image) const;
};

/// Applies the membership rules. With `with_images` false, no ii sets and no
/// image pr sets are built.
PairSets build_pair_sets(const std::vector<ProductView>& batch, const Thresholds& th = {}, bool with_images = true);

struct CpcLosses {
  ad::Var cpc_ii, cpc_pr_t, cpc_pr_v, cpc_pr;
};

/// -sum over S+_ii and S^P_ii of log(phi / sum over all ii pairs phi).
ad::Var cpc_inner_instance(const PairSets& sets, double tau = 1.0);
/// Per modality: -sum over each product's positives of log(phi / sum over that
/// product's positives and negatives); cpc_pr = text + image.
CpcLosses cpc_product_review(const PairSets& sets, double tau = 1.0);

/// Probability of a pair within its softmax denominator (per-instance report).
double pair_probability(const Pair& pair, const std::vector<Pair>& universe, double tau = 1.0);

}  // namespace sancl::cpc
