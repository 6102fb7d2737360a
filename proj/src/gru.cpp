// SPDX-License-Identifier: Apache-2.0
#include "sancl/gru.hpp"

#include <cmath>

#include "sancl/errors.hpp"

namespace sancl {

GruParams::GruParams(const std::string& prefix, std::size_t input_dim, std::size_t hidden_dim)
    : w_x(prefix + ".w_x", Matrix(input_dim, 3 * hidden_dim)),
      w_h(prefix + ".w_h", Matrix(hidden_dim, 3 * hidden_dim)),
      bias(prefix + ".bias", Matrix(1, 3 * hidden_dim)) {}

GruVars GruVars::bind(GruParams& p) {
  return {ad::leaf(p.w_x), ad::leaf(p.w_h), ad::leaf(p.bias)};
}

namespace {

void check_shapes(std::size_t in_cols, std::size_t h_cols, const GruVars& p) {
  const std::size_t hidden = p.w_h.rows();
  if (p.w_h.cols() != 3 * hidden || p.w_x.cols() != 3 * hidden || p.bias.cols() != 3 * hidden ||
      p.bias.rows() != 1) {
    throw DimensionError("gru: inconsistent parameter shapes");
  }
  if (in_cols != p.w_x.rows()) {
    throw DimensionError("gru: input width " + std::to_string(in_cols) + " but w_x is " +
                         p.w_x.value().shape_string());
  }
  if (h_cols != hidden) {
    throw DimensionError("gru: hidden width " + std::to_string(h_cols) + " but hidden size is " +
                         std::to_string(hidden));
  }
}

// Column block [k*h, (k+1)*h) of a 1 x 3h row as a Var.
ad::Var block(const ad::Var& row, std::size_t k, std::size_t h) {
  Matrix sel(3 * h, h);
  for (std::size_t j = 0; j < h; ++j) sel(k * h + j, j) = 1.0;
  return ad::matmul(row, ad::constant(std::move(sel)));
}

}  // namespace

ad::Var gru_cell(const ad::Var& x_t, const ad::Var& h_prev, const GruVars& p) {
  if (x_t.rows() != 1 || h_prev.rows() != 1) throw DimensionError("gru_cell: expects row vectors");
  check_shapes(x_t.cols(), h_prev.cols(), p);
  const std::size_t h = h_prev.cols();

  const ad::Var xw = ad::add(ad::matmul(x_t, p.w_x), p.bias);
  const ad::Var hw = ad::matmul(h_prev, p.w_h);

  const ad::Var z = ad::sigmoid(ad::add(block(xw, 0, h), block(hw, 0, h)));
  const ad::Var r = ad::sigmoid(ad::add(block(xw, 1, h), block(hw, 1, h)));

  // Candidate uses (r * h_prev) against the candidate block of w_h.
  Matrix sel(3 * h, h);
  for (std::size_t j = 0; j < h; ++j) sel(2 * h + j, j) = 1.0;
  const ad::Var wh_cand = ad::matmul(p.w_h, ad::constant(std::move(sel)));
  const ad::Var n =
      ad::tanh(ad::add(block(xw, 2, h), ad::matmul(ad::hadamard(r, h_prev), wh_cand)));

  const ad::Var one_minus_z = ad::add_scalar(ad::scale(z, -1.0), 1.0);
  return ad::add(ad::hadamard(one_minus_z, h_prev), ad::hadamard(z, n));
}

namespace {

struct StepCache {
  std::vector<Scalar> h_prev, z, r, n, q;  // q = r * h_prev
};

}  // namespace

ad::Var gru_sequence(const ad::Var& inputs, const GruVars& p) {
  const std::size_t hidden = p.w_h.rows();
  check_shapes(inputs.cols(), hidden, p);
  const std::size_t len = inputs.rows();
  if (len == 0) throw DomainError("gru_sequence: empty sequence");

  const Matrix& x = inputs.value();
  const Matrix& wx = p.w_x.value();
  const Matrix& wh = p.w_h.value();
  const Matrix& b = p.bias.value();
  const std::size_t h3 = 3 * hidden;

  Matrix states(len, hidden);
  // x W_x + b for every step at once.
  Matrix xw = matmul(x, wx);
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t j = 0; j < h3; ++j) xw(t, j) += b[j];

  auto cache = std::make_shared<std::vector<StepCache>>(len);
  std::vector<Scalar> h(hidden, 0.0), hw_zr(2 * hidden), hw_n(hidden);
  for (std::size_t t = 0; t < len; ++t) {
    StepCache& c = (*cache)[t];
    c.h_prev = h;
    // h W_h for update and reset blocks.
    std::fill(hw_zr.begin(), hw_zr.end(), 0.0);
    for (std::size_t i = 0; i < hidden; ++i) {
      const Scalar hv = h[i];
      if (hv == 0.0) continue;
      const Scalar* wr = wh.row(i).data();
      for (std::size_t j = 0; j < 2 * hidden; ++j) hw_zr[j] += hv * wr[j];
    }
    c.z.resize(hidden);
    c.r.resize(hidden);
    c.q.resize(hidden);
    c.n.resize(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
      c.z[j] = sigmoid(xw(t, j) + hw_zr[j]);
      c.r[j] = sigmoid(xw(t, hidden + j) + hw_zr[hidden + j]);
      c.q[j] = c.r[j] * h[j];
    }
    std::fill(hw_n.begin(), hw_n.end(), 0.0);
    for (std::size_t i = 0; i < hidden; ++i) {
      const Scalar qv = c.q[i];
      if (qv == 0.0) continue;
      const Scalar* wr = wh.row(i).data() + 2 * hidden;
      for (std::size_t j = 0; j < hidden; ++j) hw_n[j] += qv * wr[j];
    }
    for (std::size_t j = 0; j < hidden; ++j) {
      c.n[j] = std::tanh(xw(t, 2 * hidden + j) + hw_n[j]);
      h[j] = (1.0 - c.z[j]) * h[j] + c.z[j] * c.n[j];
      states(t, j) = h[j];
    }
  }

  auto node = std::make_shared<ad::Node>();
  node->value = std::move(states);
  node->op = "gru_sequence";
  node->requires_grad = inputs.requires_grad() || p.w_x.requires_grad() ||
                        p.w_h.requires_grad() || p.bias.requires_grad();
  if (!node->requires_grad) return ad::Var(std::move(node));

  node->inputs = {inputs.node(), p.w_x.node(), p.w_h.node(), p.bias.node()};
  node->backward = [cache, hidden, len](ad::Node& self) {
    const Matrix& x = self.inputs[0]->value;
    const Matrix& wx = self.inputs[1]->value;
    const Matrix& wh = self.inputs[2]->value;
    const std::size_t h3 = 3 * hidden;

    Matrix d_pre(len, h3);  // gradients w.r.t. gate pre-activations, per step
    Matrix dwh(hidden, h3);
    std::vector<Scalar> carry(hidden, 0.0), dh(hidden), dq(hidden);

    for (std::size_t tt = len; tt-- > 0;) {
      const StepCache& c = (*cache)[tt];
      for (std::size_t j = 0; j < hidden; ++j) dh[j] = self.grad(tt, j) + carry[j];

      auto dp = d_pre.row(tt);
      for (std::size_t j = 0; j < hidden; ++j) {
        const Scalar dz = dh[j] * (c.n[j] - c.h_prev[j]);
        const Scalar dn = dh[j] * c.z[j];
        dp[j] = dz * c.z[j] * (1.0 - c.z[j]);
        dp[2 * hidden + j] = dn * (1.0 - c.n[j] * c.n[j]);
        carry[j] = dh[j] * (1.0 - c.z[j]);
      }
      // dq = da_n Wh_n^T
      for (std::size_t i = 0; i < hidden; ++i) {
        const Scalar* wr = wh.row(i).data() + 2 * hidden;
        Scalar acc = 0.0;
        for (std::size_t j = 0; j < hidden; ++j) acc += dp[2 * hidden + j] * wr[j];
        dq[i] = acc;
      }
      for (std::size_t j = 0; j < hidden; ++j) {
        const Scalar dr = dq[j] * c.h_prev[j];
        dp[hidden + j] = dr * c.r[j] * (1.0 - c.r[j]);
        carry[j] += dq[j] * c.r[j];
      }
      // carry += [da_z | da_r] Wh_{z,r}^T ; accumulate dWh.
      for (std::size_t i = 0; i < hidden; ++i) {
        const Scalar* wr = wh.row(i).data();
        Scalar acc = 0.0;
        for (std::size_t j = 0; j < 2 * hidden; ++j) acc += dp[j] * wr[j];
        carry[i] += acc;
        Scalar* gr = dwh.row(i).data();
        const Scalar hp = c.h_prev[i];
        const Scalar qv = c.q[i];
        for (std::size_t j = 0; j < 2 * hidden; ++j) gr[j] += hp * dp[j];
        for (std::size_t j = 0; j < hidden; ++j) gr[2 * hidden + j] += qv * dp[2 * hidden + j];
      }
    }

    if (self.inputs[0]->requires_grad) add_into(self.inputs[0]->grad_buffer(), matmul_nt(d_pre, wx));
    if (self.inputs[1]->requires_grad) add_into(self.inputs[1]->grad_buffer(), matmul_tn(x, d_pre));
    if (self.inputs[2]->requires_grad) add_into(self.inputs[2]->grad_buffer(), dwh);
    if (self.inputs[3]->requires_grad) {
      Matrix db(1, h3);
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t j = 0; j < h3; ++j) db[j] += d_pre(t, j);
      add_into(self.inputs[3]->grad_buffer(), db);
    }
  };
  return ad::Var(std::move(node));
}

}  // namespace sancl
