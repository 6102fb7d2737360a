// SPDX-License-Identifier: Apache-2.0
#include "sancl/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sancl/errors.hpp"

namespace sancl {

Matrix::Matrix(std::size_t rows, std::size_t cols, Scalar fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<Scalar> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<Scalar>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<Scalar> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged initializer for Matrix");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::row_vector(std::span<const Scalar> values) {
  return Matrix(1, values.size(), std::vector<Scalar>(values.begin(), values.end()));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
}

void Matrix::fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void require_finite(const Matrix& m, const std::string& what) {
  if (!m.all_finite()) throw DomainError(what + " contains NaN or Inf");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape_string() + " by " +
                         b.shape_string());
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    Scalar* o = out.row(i).data();
    for (std::size_t p = 0; p < k; ++p) {
      const Scalar av = a(i, p);
      if (av == 0.0) continue;
      const Scalar* br = b.row(p).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: cannot multiply " + a.shape_string() + " by transpose of " +
                         b.shape_string());
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar* ar = a.row(i).data();
    for (std::size_t j = 0; j < m; ++j) {
      const Scalar* br = b.row(j).data();
      Scalar acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: cannot multiply transpose of " + a.shape_string() + " by " +
                         b.shape_string());
  }
  const std::size_t n = a.cols(), k = a.rows(), m = b.cols();
  Matrix out(n, m);
  for (std::size_t p = 0; p < k; ++p) {
    const Scalar* ar = a.row(p).data();
    const Scalar* br = b.row(p).data();
    for (std::size_t i = 0; i < n; ++i) {
      const Scalar av = ar[i];
      if (av == 0.0) continue;
      Scalar* o = out.row(i).data();
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix softmax_rows(const Matrix& x) {
  if (x.empty()) throw DomainError("softmax_rows: empty matrix");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto in = x.row(i);
    auto o = out.row(i);
    const Scalar mx = *std::max_element(in.begin(), in.end());
    Scalar total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (auto& v : o) v /= total;
  }
  return out;
}

Scalar sigmoid(Scalar x) {
  // Split by sign so exp never overflows; saturate inside (0, 1).
  constexpr Scalar lo = std::numeric_limits<Scalar>::denorm_min();
  constexpr Scalar hi = 1.0 - std::numeric_limits<Scalar>::epsilon() / 2;
  if (x >= 0.0) return std::min(hi, 1.0 / (1.0 + std::exp(-x)));
  const Scalar e = std::exp(x);
  return std::max(lo, e / (1.0 + e));
}

Matrix sigmoid(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

Matrix tanh_activation(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

Matrix l2_normalize(const Matrix& v, Scalar eps) {
  Scalar sq = 0.0;
  for (Scalar x : v.data()) sq += x * x;
  const Scalar norm = std::sqrt(sq);
  // A NaN norm propagates so callers see a non-finite result.
  if (norm <= eps) {
    throw DegenerateInputError("l2_normalize: vector norm " + std::to_string(norm) +
                               " is not above eps");
  }
  Matrix out = v;
  for (auto& x : out.data()) x /= norm;
  return out;
}

void add_into(Matrix& out, const Matrix& a) {
  if (out.rows() != a.rows() || out.cols() != a.cols()) {
    throw DimensionError("add_into: shape " + out.shape_string() + " vs " + a.shape_string());
  }
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
}

}  // namespace sancl
