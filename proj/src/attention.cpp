// SPDX-License-Identifier: Apache-2.0
#include "sancl/attention.hpp"

#include <cmath>

#include "sancl/errors.hpp"

namespace sancl::attn {

SelfAttentionParams::SelfAttentionParams(const std::string& prefix, std::size_t dim)
    : w_a(prefix + ".w_a", Matrix(dim, dim)), w_v(prefix + ".w_v", Matrix(dim, dim)) {}

CrossAttentionParams::CrossAttentionParams(const std::string& prefix, std::size_t dim)
    : w_c(prefix + ".w_c", Matrix(dim, dim)), w_u(prefix + ".w_u", Matrix(dim, dim)) {}

ad::Var bilinear_attention(const ad::Var& q, const ad::Var& w, const ad::Var& k) {
  if (q.rows() == 0 || k.rows() == 0) throw DomainError("attention over an empty sequence");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return ad::softmax_rows(ad::scale(ad::matmul_nt(ad::matmul(q, w), k), inv_sqrt_d));
}

ad::Var base_attention(const ad::Var& h, const ad::Var& w_a) { return bilinear_attention(h, w_a, h); }

ad::Var reweight(const ad::Var& a, const ad::Var& m_real) {
  if (m_real.rows() != 1 || m_real.cols() != a.rows() || a.rows() != a.cols()) {
    throw DimensionError("reweight: mask " + m_real.value().shape_string() + " does not match attention " +
                         a.value().shape_string());
  }
  return ad::hadamard(ad::matmul(ad::transpose(m_real), m_real), a);
}

Matrix reweight(const Matrix& a, const std::vector<double>& m_real) {
  if (m_real.size() != a.rows() || a.rows() != a.cols()) {
    throw DimensionError("reweight: mask length " + std::to_string(m_real.size()) + " does not match attention " +
                         a.shape_string());
  }
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = (m_real[i] * m_real[j]) * a(i, j);
  return out;
}

ad::Var self_attend(const ad::Var& h, const ad::Var& a_prime, const ad::Var& w_v, bool plain_residual) {
  return ad::add(h, ad::matmul(a_prime, plain_residual ? h : ad::matmul(h, w_v)));
}

ad::Var plain_self_attention(const ad::Var& h, const ad::Var& w_a, const ad::Var& w_v) {
  return self_attend(h, base_attention(h, w_a), w_v);
}

ad::Var cross_field_attend(const ad::Var& h_review, const ad::Var& h_product, const ad::Var& w_c,
                           const ad::Var& w_u) {
  return ad::add(h_review, ad::matmul(bilinear_attention(h_review, w_c, h_product), ad::matmul(h_product, w_u)));
}

ad::Var masked_pool(const ad::Var& h, const ad::Var& m_real) {
  if (m_real.rows() != 1 || m_real.cols() != h.rows()) {
    throw DimensionError("masked_pool: mask " + m_real.value().shape_string() + " vs states " +
                         h.value().shape_string());
  }
  return ad::div_scalar(ad::matmul(m_real, h), ad::sum(m_real));
}

std::pair<ad::Var, ad::Var> visual_pipeline(const ad::Var& hv_review, const ad::Var& hv_product,
                                            const ad::Var& w_c, const ad::Var& w_u) {
  const ad::Var r = cross_field_attend(hv_review, hv_product, w_c, w_u);
  const ad::Var p = cross_field_attend(hv_product, hv_review, w_c, w_u);
  return {ad::mean_rows(r), ad::mean_rows(p)};
}

}  // namespace sancl::attn
