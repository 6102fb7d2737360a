// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode differentiation over Matrix values.
//
// Every op returns a Var that owns a tape node holding the forward value, the
// inputs it was computed from and a closure that pushes the node's gradient
// back into those inputs. backward() orders the reachable nodes topologically
// and runs each closure exactly once, last node first. A node whose inputs
// carry no gradient is created without a closure, so inference builds no
// backward state.

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sancl/matrix.hpp"

namespace sancl {

/// A trainable tensor. grad always has the shape of value.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()),
        trainable(train) {}

  void zero_grad() { grad.fill(0.0); }
};

namespace ad {

struct Node {
  Matrix value;
  Matrix grad;  // allocated lazily, same shape as value
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  Parameter* param = nullptr;
  bool requires_grad = false;
  const char* op = "const";

  Matrix& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Matrix& value() const { return node_->value; }
  /// Gradient accumulated by the last backward(); zeros when none reached it.
  const Matrix& grad() const { return node_->grad_buffer(); }
  Scalar scalar() const;
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var constant_scalar(Scalar v);
/// Leaf bound to a parameter; backward adds into param.grad. Parameters with
/// trainable == false yield a constant.
Var leaf(Parameter& param);
/// Leaf that collects its own gradient (used by tests and grad checks).
Var variable(Matrix value);

/// Seeds d(root)/d(root) = 1 and propagates. root must be 1 x 1.
void backward(const Var& root);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, Scalar s);
Var add_scalar(const Var& a, Scalar s);
/// a (n x m) + row (1 x m) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// a * s where s is a 1 x 1 Var.
Var mul_scalar(const Var& a, const Var& s);
/// a / s where s is a 1 x 1 Var.
Var div_scalar(const Var& a, const Var& s);

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var softmax_rows(const Var& x);
Var sigmoid(const Var& x);
Var tanh(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var relu(const Var& x);

/// Sum of all entries as 1 x 1.
Var sum(const Var& a);
/// Column-wise mean over rows: n x m -> 1 x m.
Var mean_rows(const Var& a);
/// Row r as a 1 x m vector.
Var take_row(const Var& a, std::size_t r);
/// Horizontal concatenation of row vectors (equal row counts).
Var concat_cols(std::span<const Var> parts);
/// Horizontal concatenation of 1 x 1 scalars into a row.
Var stack_scalars(std::span<const Var> parts);
/// Rows of a 1 x n vector scaled to unit norm; throws DegenerateInputError
/// when the norm is <= eps.
Var l2_normalize(const Var& v, Scalar eps = 1e-12);
/// Sum of elementwise product, 1 x 1.
Var dot(const Var& a, const Var& b);
/// log(sum(exp(x))) over all entries, computed with max shift.
Var logsumexp(const Var& x);
/// Row gather from a table; backward scatters into the table rows.
Var gather_rows(const Var& table, std::span<const std::size_t> rows);
/// Elementwise product with a fixed multiplier (dropout masks).
Var mul_const(const Var& a, const Matrix& m);

}  // namespace ad
}  // namespace sancl
