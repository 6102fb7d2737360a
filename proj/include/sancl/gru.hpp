// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "sancl/autograd.hpp"

namespace sancl {

/// Gate-stacked GRU weights. Column blocks are ordered [update | reset | candidate].
///   z  = sigmoid(x Wx_z + h Wh_z + b_z)
///   r  = sigmoid(x Wx_r + h Wh_r + b_r)
///   n  = tanh(x Wx_n + (r * h) Wh_n + b_n)
///   h' = (1 - z) * h + z * n
struct GruParams {
  Parameter w_x;  // input_dim x 3h
  Parameter w_h;  // h x 3h
  Parameter bias; // 1 x 3h

  GruParams() = default;
  GruParams(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim);

  std::size_t input_dim() const { return w_x.value.rows(); }
  std::size_t hidden_dim() const { return w_h.value.rows(); }
};

/// The GRU weights as graph leaves for one forward pass.
struct GruVars {
  ad::Var w_x, w_h, bias;
  static GruVars bind(GruParams& p);
};

/// One recurrence step assembled from primitive ops. x_t and h_prev are 1 x d rows.
ad::Var gru_cell(const ad::Var& x_t, const ad::Var& h_prev, const GruVars& p);

/// Left-to-right scan from a zero state over the rows of `inputs`
/// (l x input_dim). Returns all hidden states (l x h); the last row is the
/// sequence representation. Backward is hand-written BPTT.
ad::Var gru_sequence(const ad::Var& inputs, const GruVars& p);

}  // namespace sancl
