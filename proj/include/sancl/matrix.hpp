// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sancl {

using Scalar = double;

/// Dense row-major matrix. Vectors are 1 x n rows.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Scalar fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<Scalar> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<Scalar>> rows);
  static Matrix row_vector(std::span<const Scalar> values);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Scalar& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Scalar operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  Scalar& operator[](std::size_t i) { return data_[i]; }
  Scalar operator[](std::size_t i) const { return data_[i]; }

  std::span<Scalar> data() noexcept { return data_; }
  std::span<const Scalar> data() const noexcept { return data_; }
  std::span<Scalar> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Scalar> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool all_finite() const noexcept;
  void fill(Scalar v);
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Scalar> data_;
};

/// Throws DomainError naming `what` when any entry is NaN or infinite.
void require_finite(const Matrix& m, const std::string& what);

// Plain (non-differentiable) kernels shared by the autograd forward and
// backward passes.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix softmax_rows(const Matrix& x);
Matrix sigmoid(const Matrix& x);
Scalar sigmoid(Scalar x);
Matrix tanh_activation(const Matrix& x);
/// Unit-norm copy of a 1 x n vector; throws DegenerateInputError when the
/// norm is <= eps.
Matrix l2_normalize(const Matrix& v, Scalar eps = 1e-12);

/// out += a (shapes must match).
void add_into(Matrix& out, const Matrix& a);

}  // namespace sancl
