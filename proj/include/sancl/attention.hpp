// SPDX-License-Identifier: Apache-2.0
#pragma once

// Single-head bilinear attention: probe-masked self-attention for review text,
// cross-field attention (review -> product) and pooling.

#include <string>
#include <utility>
#include <vector>

#include "sancl/autograd.hpp"

namespace sancl::attn {

/// W_a (score) and W_v (value) for one self-attention block, both d x d.
struct SelfAttentionParams {
  Parameter w_a, w_v;
  SelfAttentionParams(const std::string& prefix, std::size_t dim);
  std::vector<Parameter*> parameters() { return {&w_a, &w_v}; }
};

/// W_c (score) and W_u (value) for query -> key/value attention, both d x d.
struct CrossAttentionParams {
  Parameter w_c, w_u;
  CrossAttentionParams(const std::string& prefix, std::size_t dim);
  std::vector<Parameter*> parameters() { return {&w_c, &w_u}; }
};

/// softmax_rows(q W k^T / sqrt(d)); q is l x d, k is n x d.
ad::Var bilinear_attention(const ad::Var& q, const ad::Var& w, const ad::Var& k);

/// A = softmax_rows(h W_a h^T / sqrt(d))
ad::Var base_attention(const ad::Var& h, const ad::Var& w_a);

/// A' = (M'^T M') .* A with M' a 1 x l row. No row re-normalization.
ad::Var reweight(const ad::Var& a, const ad::Var& m_real);
/// Plain-value form of reweight, used by equivalence checks.
Matrix reweight(const Matrix& a, const std::vector<double>& m_real);

/// H' = H + A'(H W_v); with plain_residual, H + A'H.
ad::Var self_attend(const ad::Var& h, const ad::Var& a_prime, const ad::Var& w_v, bool plain_residual = false);

/// Mask-free self-attention with residual: H + softmax(H W_a H^T/sqrt d)(H W_v).
ad::Var plain_self_attention(const ad::Var& h, const ad::Var& w_a, const ad::Var& w_v);

/// H'' = H' + softmax(H' W_c H_p^T/sqrt d)(H_p W_u)
ad::Var cross_field_attend(const ad::Var& h_review, const ad::Var& h_product, const ad::Var& w_c,
                           const ad::Var& w_u);

/// S = sum_i m'_i h_i / sum_i m'_i ; m_real is 1 x l, result 1 x d.
ad::Var masked_pool(const ad::Var& h, const ad::Var& m_real);

/// Cross attention in both directions with shared W_c/W_u, then mean pooling
/// of each side. Returns (S_v^r, S_v^p).
std::pair<ad::Var, ad::Var> visual_pipeline(const ad::Var& hv_review, const ad::Var& hv_product,
                                            const ad::Var& w_c, const ad::Var& w_u);

}  // namespace sancl::attn
