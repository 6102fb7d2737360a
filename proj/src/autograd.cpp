// SPDX-License-Identifier: Apache-2.0
#include "sancl/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "sancl/errors.hpp"

namespace sancl::ad {

Matrix& Node::grad_buffer() {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad = Matrix(value.rows(), value.cols());
  }
  return grad;
}

Scalar Var::scalar() const {
  if (rows() != 1 || cols() != 1) {
    throw DimensionError("Var::scalar on " + value().shape_string());
  }
  return value()[0];
}

namespace {

using NodePtr = std::shared_ptr<Node>;

Var make(Matrix value, std::vector<NodePtr> inputs, const char* op,
         std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  n->requires_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const NodePtr& p) { return p->requires_grad; });
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward = std::move(bw);
  }
  return Var(std::move(n));
}

// Adds g into input i's gradient when that input participates in backward.
inline void accumulate(Node& self, std::size_t i, const Matrix& g) {
  Node& in = *self.inputs[i];
  if (in.requires_grad) add_into(in.grad_buffer(), g);
}

inline bool wants(const Node& self, std::size_t i) { return self.inputs[i]->requires_grad; }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape " + a.value().shape_string() + " vs " +
                         b.value().shape_string());
  }
}

void require_scalar(const Var& s, const char* op) {
  if (s.rows() != 1 || s.cols() != 1) {
    throw DimensionError(std::string(op) + ": expected 1x1 scalar, got " +
                         s.value().shape_string());
  }
}

}  // namespace

Var constant(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var constant_scalar(Scalar v) { return constant(Matrix(1, 1, v)); }

Var leaf(Parameter& param) {
  if (!param.trainable) return constant(param.value);
  auto n = std::make_shared<Node>();
  n->value = param.value;
  n->param = &param;
  n->requires_grad = true;
  n->op = "param";
  n->backward = [](Node& self) {
    if (self.param->grad.size() != self.value.size()) {
      self.param->grad = Matrix(self.value.rows(), self.value.cols());
    }
    add_into(self.param->grad, self.grad_buffer());
  };
  return Var(std::move(n));
}

Var variable(Matrix value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->op = "variable";
  return Var(std::move(n));
}

void backward(const Var& root) {
  require_scalar(root, "backward");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS yields a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->grad_buffer().fill(0.0);
  root.node()->grad_buffer()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Matrix v = a.value();
  add_into(v, b.value());
  return make(std::move(v), {a.node(), b.node()}, "add", [](Node& self) {
    accumulate(self, 0, self.grad);
    accumulate(self, 1, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Matrix v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= b.value()[i];
  return make(std::move(v), {a.node(), b.node()}, "sub", [](Node& self) {
    accumulate(self, 0, self.grad);
    if (wants(self, 1)) {
      Matrix g = self.grad;
      for (auto& x : g.data()) x = -x;
      accumulate(self, 1, g);
    }
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  Matrix v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= b.value()[i];
  return make(std::move(v), {a.node(), b.node()}, "hadamard", [](Node& self) {
    const Matrix& av = self.inputs[0]->value;
    const Matrix& bv = self.inputs[1]->value;
    if (wants(self, 0)) {
      Matrix g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= bv[i];
      accumulate(self, 0, g);
    }
    if (wants(self, 1)) {
      Matrix g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= av[i];
      accumulate(self, 1, g);
    }
  });
}

Var scale(const Var& a, Scalar s) {
  Matrix v = a.value();
  for (auto& x : v.data()) x *= s;
  return make(std::move(v), {a.node()}, "scale", [s](Node& self) {
    Matrix g = self.grad;
    for (auto& x : g.data()) x *= s;
    accumulate(self, 0, g);
  });
}

Var add_scalar(const Var& a, Scalar s) {
  Matrix v = a.value();
  for (auto& x : v.data()) x += s;
  return make(std::move(v), {a.node()}, "add_scalar",
              [](Node& self) { accumulate(self, 0, self.grad); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: cannot broadcast " + row.value().shape_string() + " over " +
                         a.value().shape_string());
  }
  Matrix v = a.value();
  for (std::size_t i = 0; i < v.rows(); ++i) {
    auto r = v.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += row.value()[j];
  }
  return make(std::move(v), {a.node(), row.node()}, "add_row", [](Node& self) {
    accumulate(self, 0, self.grad);
    if (wants(self, 1)) {
      Matrix g(1, self.grad.cols());
      for (std::size_t i = 0; i < self.grad.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) g[j] += self.grad(i, j);
      accumulate(self, 1, g);
    }
  });
}

Var mul_scalar(const Var& a, const Var& s) {
  require_scalar(s, "mul_scalar");
  const Scalar sv = s.value()[0];
  Matrix v = a.value();
  for (auto& x : v.data()) x *= sv;
  return make(std::move(v), {a.node(), s.node()}, "mul_scalar", [](Node& self) {
    const Scalar sv = self.inputs[1]->value[0];
    if (wants(self, 0)) {
      Matrix g = self.grad;
      for (auto& x : g.data()) x *= sv;
      accumulate(self, 0, g);
    }
    if (wants(self, 1)) {
      const Matrix& av = self.inputs[0]->value;
      Scalar acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += self.grad[i] * av[i];
      accumulate(self, 1, Matrix(1, 1, acc));
    }
  });
}

Var div_scalar(const Var& a, const Var& s) {
  require_scalar(s, "div_scalar");
  const Scalar sv = s.value()[0];
  if (sv == 0.0) throw DomainError("div_scalar: division by zero");
  Matrix v = a.value();
  for (auto& x : v.data()) x /= sv;
  return make(std::move(v), {a.node(), s.node()}, "div_scalar", [](Node& self) {
    const Scalar sv = self.inputs[1]->value[0];
    if (wants(self, 0)) {
      Matrix g = self.grad;
      for (auto& x : g.data()) x /= sv;
      accumulate(self, 0, g);
    }
    if (wants(self, 1)) {
      // d(a/s)/ds = -a/s^2 = -out/s
      Scalar acc = 0.0;
      for (std::size_t i = 0; i < self.value.size(); ++i) acc += self.grad[i] * self.value[i];
      accumulate(self, 1, Matrix(1, 1, -acc / sv));
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  Matrix v = sancl::matmul(a.value(), b.value());
  return make(std::move(v), {a.node(), b.node()}, "matmul", [](Node& self) {
    if (wants(self, 0)) accumulate(self, 0, sancl::matmul_nt(self.grad, self.inputs[1]->value));
    if (wants(self, 1)) accumulate(self, 1, sancl::matmul_tn(self.inputs[0]->value, self.grad));
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Matrix v = sancl::matmul_nt(a.value(), b.value());
  return make(std::move(v), {a.node(), b.node()}, "matmul_nt", [](Node& self) {
    // out = a b^T ; da = g b ; db = g^T a
    if (wants(self, 0)) accumulate(self, 0, sancl::matmul(self.grad, self.inputs[1]->value));
    if (wants(self, 1)) accumulate(self, 1, sancl::matmul_tn(self.grad, self.inputs[0]->value));
  });
}

Var transpose(const Var& a) {
  return make(sancl::transpose(a.value()), {a.node()}, "transpose",
              [](Node& self) { accumulate(self, 0, sancl::transpose(self.grad)); });
}

Var softmax_rows(const Var& x) {
  return make(sancl::softmax_rows(x.value()), {x.node()}, "softmax_rows", [](Node& self) {
    const Matrix& y = self.value;
    Matrix g(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      Scalar inner = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) inner += self.grad(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) g(i, j) = y(i, j) * (self.grad(i, j) - inner);
    }
    accumulate(self, 0, g);
  });
}

Var sigmoid(const Var& x) {
  return make(sancl::sigmoid(x.value()), {x.node()}, "sigmoid", [](Node& self) {
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= self.value[i] * (1.0 - self.value[i]);
    accumulate(self, 0, g);
  });
}

Var tanh(const Var& x) {
  return make(sancl::tanh_activation(x.value()), {x.node()}, "tanh", [](Node& self) {
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - self.value[i] * self.value[i];
    accumulate(self, 0, g);
  });
}

Var exp(const Var& x) {
  Matrix v = x.value();
  for (auto& e : v.data()) e = std::exp(e);
  return make(std::move(v), {x.node()}, "exp", [](Node& self) {
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= self.value[i];
    accumulate(self, 0, g);
  });
}

Var log(const Var& x) {
  Matrix v = x.value();
  for (auto& e : v.data()) {
    if (!(e > 0.0)) throw DomainError("log: non-positive input");
    e = std::log(e);
  }
  return make(std::move(v), {x.node()}, "log", [](Node& self) {
    Matrix g = self.grad;
    const Matrix& in = self.inputs[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] /= in[i];
    accumulate(self, 0, g);
  });
}

Var relu(const Var& x) {
  Matrix v = x.value();
  for (auto& e : v.data()) e = e > 0.0 ? e : 0.0;
  return make(std::move(v), {x.node()}, "relu", [](Node& self) {
    Matrix g = self.grad;
    const Matrix& in = self.inputs[0]->value;
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!(in[i] > 0.0)) g[i] = 0.0;
    accumulate(self, 0, g);
  });
}

Var sum(const Var& a) {
  Scalar total = 0.0;
  for (Scalar v : a.value().data()) total += v;
  return make(Matrix(1, 1, total), {a.node()}, "sum", [](Node& self) {
    const Matrix& in = self.inputs[0]->value;
    accumulate(self, 0, Matrix(in.rows(), in.cols(), self.grad[0]));
  });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw DomainError("mean_rows: no rows");
  const std::size_t n = a.rows();
  Matrix v(1, a.cols());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) v[j] += a.value()(i, j);
  for (auto& x : v.data()) x /= static_cast<Scalar>(n);
  return make(std::move(v), {a.node()}, "mean_rows", [n](Node& self) {
    Matrix g(n, self.value.cols());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) g(i, j) = self.grad[j] / static_cast<Scalar>(n);
    accumulate(self, 0, g);
  });
}

Var take_row(const Var& a, std::size_t r) {
  if (r >= a.rows()) throw DimensionError("take_row: row out of range");
  Matrix v = Matrix::row_vector(a.value().row(r));
  return make(std::move(v), {a.node()}, "take_row", [r](Node& self) {
    const Matrix& in = self.inputs[0]->value;
    Matrix g(in.rows(), in.cols());
    std::copy(self.grad.data().begin(), self.grad.data().end(), g.row(r).begin());
    accumulate(self, 0, g);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("concat_cols: nothing to concatenate");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  std::vector<NodePtr> inputs;
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) v(i, off + j) = p.value()(i, j);
    off += p.cols();
    inputs.push_back(p.node());
  }
  return make(std::move(v), std::move(inputs), "concat_cols", [](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const Matrix& in = self.inputs[k]->value;
      if (wants(self, k)) {
        Matrix g(in.rows(), in.cols());
        for (std::size_t i = 0; i < in.rows(); ++i)
          for (std::size_t j = 0; j < in.cols(); ++j) g(i, j) = self.grad(i, off + j);
        accumulate(self, k, g);
      }
      off += in.cols();
    }
  });
}

Var stack_scalars(std::span<const Var> parts) {
  for (const auto& p : parts) require_scalar(p, "stack_scalars");
  return concat_cols(parts);
}

Var l2_normalize(const Var& v, Scalar eps) {
  Matrix out = sancl::l2_normalize(v.value(), eps);
  Scalar sq = 0.0;
  for (Scalar x : v.value().data()) sq += x * x;
  const Scalar norm = std::sqrt(sq);
  return make(std::move(out), {v.node()}, "l2_normalize", [norm](Node& self) {
    // y = x/|x| ; dx = (g - y (y.g)) / |x|
    const Matrix& y = self.value;
    Scalar yg = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) yg += y[i] * self.grad[i];
    Matrix g(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.size(); ++i) g[i] = (self.grad[i] - y[i] * yg) / norm;
    accumulate(self, 0, g);
  });
}

Var dot(const Var& a, const Var& b) { return sum(hadamard(a, b)); }

Var logsumexp(const Var& x) {
  if (x.value().empty()) throw DomainError("logsumexp: empty input");
  const auto d = x.value().data();
  const Scalar mx = *std::max_element(d.begin(), d.end());
  Scalar total = 0.0;
  for (Scalar v : d) total += std::exp(v - mx);
  const Scalar out = mx + std::log(total);
  return make(Matrix(1, 1, out), {x.node()}, "logsumexp", [](Node& self) {
    const Matrix& in = self.inputs[0]->value;
    const Scalar lse = self.value[0];
    Matrix g(in.rows(), in.cols());
    for (std::size_t i = 0; i < in.size(); ++i) g[i] = self.grad[0] * std::exp(in[i] - lse);
    accumulate(self, 0, g);
  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> rows) {
  const Matrix& t = table.value();
  Matrix v(rows.size(), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy(t.row(rows[i]).begin(), t.row(rows[i]).end(), v.row(i).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make(std::move(v), {table.node()}, "gather_rows", [idx = std::move(idx)](Node& self) {
    Node& tbl = *self.inputs[0];
    Matrix& g = tbl.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto dst = g.row(idx[i]);
      auto src = self.grad.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  });
}

Var mul_const(const Var& a, const Matrix& m) {
  if (a.rows() != m.rows() || a.cols() != m.cols()) {
    throw DimensionError("mul_const: shape " + a.value().shape_string() + " vs " +
                         m.shape_string());
  }
  Matrix v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= m[i];
  return make(std::move(v), {a.node()}, "mul_const", [m](Node& self) {
    Matrix g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= m[i];
    accumulate(self, 0, g);
  });
}

}  // namespace sancl::ad
