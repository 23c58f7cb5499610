/*
 Copyright 2026 The snopt-kit Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

// Dense kernels shared by every module.
//
// Storage is column-major throughout: element (i, j) of an r x c matrix lives
// at data[j * r + i]. With that convention vec() is a plain copy of the
// storage and the Kronecker identities hold literally:
//
//   vec(b a^T)                   = a (x) b
//   (A (x) B)(C (x) D)^T         = (A C^T) (x) (B D^T)
//   (A (x) B)^-1 vec(W)          = vec(B^-1 W A^-T)
//
// A layer weight W (out x in) is therefore stored with its columns
// contiguous, and the parameter gradient z (x) g of a layer is exactly
// vec(g z^T).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snopt/errors.hpp"

namespace snopt {

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static DenseMatrix diagonal(std::span<const double> d) {
    DenseMatrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  // Row-wise literal, e.g. from_rows({{1, 2}, {3, 4}}).
  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    DenseMatrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionMismatch("from_rows: ragged rows");
      std::size_t j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  // Column-major storage wrapped as a matrix (the inverse of vec()).
  static DenseMatrix unvec(std::span<const double> v, std::size_t rows, std::size_t cols) {
    if (v.size() != rows * cols) throw DimensionMismatch("unvec: length does not match rows*cols");
    DenseMatrix m(rows, cols);
    std::copy(v.begin(), v.end(), m.data_.begin());
    return m;
  }

  static DenseMatrix outer(std::span<const double> a, std::span<const double> b) {
    DenseMatrix m(a.size(), b.size());
    for (std::size_t j = 0; j < b.size(); ++j)
      for (std::size_t i = 0; i < a.size(); ++i) m(i, j) = a[i] * b[j];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool is_square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::span<double> col(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
  std::span<const double> col(std::size_t j) const { return {data_.data() + j * rows_, rows_}; }

  std::vector<double> vec() const { return data_; }

  DenseMatrix transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t j = 0; j < cols_; ++j)
      for (std::size_t i = 0; i < rows_; ++i) t(j, i) = (*this)(i, j);
    return t;
  }

  DenseMatrix& operator+=(const DenseMatrix& o) {
    check_same_shape(o, "operator+=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  DenseMatrix& operator-=(const DenseMatrix& o) {
    check_same_shape(o, "operator-=");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  DenseMatrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  // this += s * a b^T
  void add_outer(std::span<const double> a, std::span<const double> b, double s = 1.0) {
    if (a.size() != rows_ || b.size() != cols_) throw DimensionMismatch("add_outer: shape");
    for (std::size_t j = 0; j < cols_; ++j) {
      const double bj = s * b[j];
      double* c = data_.data() + j * rows_;
      for (std::size_t i = 0; i < rows_; ++i) c[i] += a[i] * bj;
    }
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double max_abs() const {
    double s = 0.0;
    for (double v : data_) s = std::max(s, std::abs(v));
    return s;
  }

  friend DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
  friend DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
  friend DenseMatrix operator*(DenseMatrix a, double s) { return a *= s; }
  friend DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

  friend DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols_ != b.rows_) throw DimensionMismatch("matmul: inner dimensions differ");
    DenseMatrix c(a.rows_, b.cols_);
    for (std::size_t j = 0; j < b.cols_; ++j) {
      double* cj = c.data_.data() + j * c.rows_;
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const double bkj = b(k, j);
        if (bkj == 0.0) continue;
        const double* ak = a.data_.data() + k * a.rows_;
        for (std::size_t i = 0; i < a.rows_; ++i) cj[i] += ak[i] * bkj;
      }
    }
    return c;
  }

  friend std::vector<double> operator*(const DenseMatrix& a, std::span<const double> x) {
    if (a.cols_ != x.size()) throw DimensionMismatch("matvec: dimension");
    std::vector<double> y(a.rows_, 0.0);
    for (std::size_t j = 0; j < a.cols_; ++j) {
      const double* aj = a.data_.data() + j * a.rows_;
      for (std::size_t i = 0; i < a.rows_; ++i) y[i] += aj[i] * x[j];
    }
    return y;
  }

  bool operator==(const DenseMatrix&) const = default;

 private:
  void check_same_shape(const DenseMatrix& o, const char* what) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) throw DimensionMismatch(std::string(what) + ": shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("dot: length mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// ||a - b|| / max(||b||, tiny)
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("relative_error: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  // a zero reference falls back to the absolute error
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num) / std::sqrt(den);
}

inline double relative_error(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionMismatch("relative_error: shape mismatch");
  return relative_error(a.data(), b.data());
}

inline DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t ja = 0; ja < a.cols(); ++ja)
    for (std::size_t ia = 0; ia < a.rows(); ++ia) {
      const double s = a(ia, ja);
      for (std::size_t jb = 0; jb < b.cols(); ++jb)
        for (std::size_t ib = 0; ib < b.rows(); ++ib)
          k(ia * b.rows() + ib, ja * b.cols() + jb) = s * b(ib, jb);
    }
  return k;
}

inline bool is_symmetric(const DenseMatrix& m, double tol = 1e-10) {
  if (!m.is_square()) return false;
  const double scale = std::max(1.0, m.max_abs());
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < j; ++i)
      if (std::abs(m(i, j) - m(j, i)) > tol * scale) return false;
  return true;
}

struct SymEigen {
  std::vector<double> eigenvalues;  // descending
  DenseMatrix eigenvectors;         // column k pairs with eigenvalues[k]

  DenseMatrix reconstruct() const {
    DenseMatrix out(eigenvectors.rows(), eigenvectors.rows());
    for (std::size_t k = 0; k < eigenvalues.size(); ++k)
      out.add_outer(eigenvectors.col(k), eigenvectors.col(k), eigenvalues[k]);
    return out;
  }
};

inline constexpr double kJacobiOffTolerance = 1e-12;
inline constexpr int kJacobiMaxSweeps = 100;

// Cyclic Jacobi. Stops once the off-diagonal Frobenius norm drops below
// 1e-12 relative to ||M||_F; throws ConvergenceFailure after 100 sweeps.
inline SymEigen sym_eigen(const DenseMatrix& m) {
  if (!m.is_square()) throw NotSymmetric("sym_eigen: matrix is not square");
  if (!is_symmetric(m)) throw NotSymmetric("sym_eigen: asymmetry exceeds 1e-10");
  const std::size_t n = m.rows();
  DenseMatrix a = m;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i) a(i, j) = a(j, i) = 0.5 * (m(i, j) + m(j, i));
  DenseMatrix v = DenseMatrix::identity(n);

  const double scale = a.frobenius_norm();
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < j; ++i) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  while (off_norm() > kJacobiOffTolerance * scale) {
    if (++sweep > kJacobiMaxSweeps) throw ConvergenceFailure("sym_eigen: Jacobi did not converge in 100 sweeps");
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymEigen out{std::vector<double>(n), DenseMatrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[k], order[k]);
    std::copy_n(v.col(order[k]).begin(), n, out.eigenvectors.col(k).begin());
  }
  return out;
}

inline constexpr double kMaxConditionNumber = 1e12;

namespace detail {

// Condition estimate: eigenvalue ratio for symmetric input, pivot ratio of
// the LU factorization otherwise.
inline double condition_estimate(const DenseMatrix& m, const std::vector<double>& lu_pivots) {
  if (is_symmetric(m)) {
    const SymEigen e = sym_eigen(m);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (double l : e.eigenvalues) {
      lo = std::min(lo, std::abs(l));
      hi = std::max(hi, std::abs(l));
    }
    return lo == 0.0 ? std::numeric_limits<double>::infinity() : hi / lo;
  }
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double p : lu_pivots) {
    lo = std::min(lo, std::abs(p));
    hi = std::max(hi, std::abs(p));
  }
  return lo == 0.0 ? std::numeric_limits<double>::infinity() : hi / lo;
}

// Solves M X = R in place of R by LU with partial pivoting.
inline DenseMatrix lu_solve(const DenseMatrix& m, DenseMatrix rhs, const char* name) {
  if (!m.is_square()) throw DimensionMismatch(std::string(name) + ": factor is not square");
  if (rhs.rows() != m.rows()) throw DimensionMismatch(std::string(name) + ": rhs rows");
  const std::size_t n = m.rows();
  DenseMatrix lu = m;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> pivots(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > std::abs(lu(piv, k))) piv = i;
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
      std::swap(perm[k], perm[piv]);
    }
    pivots[k] = lu(k, k);
    if (lu(k, k) == 0.0) continue;
    for (std::size_t i = k + 1; i < n; ++i) {
      lu(i, k) /= lu(k, k);
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= lu(i, k) * lu(k, j);
    }
  }
  if (condition_estimate(m, pivots) > kMaxConditionNumber)
    throw SingularMatrix(std::string(name) + ": factor is numerically singular (condition > 1e12)");

  DenseMatrix x(n, rhs.cols());
  for (std::size_t c = 0; c < rhs.cols(); ++c) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = rhs(perm[i], c);
      for (std::size_t j = 0; j < i; ++j) s -= lu(i, j) * y[j];
      y[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = y[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= lu(i, j) * x(j, c);
      x(i, c) = s / lu(i, i);
    }
  }
  return x;
}

}  // namespace detail

// Returns (A (x) B)^-1 w evaluated as vec(B^-1 unvec(w) A^-T), never forming
// the Kronecker product.
inline std::vector<double> kron_solve_vec(const DenseMatrix& a, const DenseMatrix& b, std::span<const double> w) {
  if (!a.is_square() || !b.is_square()) throw DimensionMismatch("kron_solve_vec: factors must be square");
  if (w.size() != a.cols() * b.rows()) throw DimensionMismatch("kron_solve_vec: |w| != cols(A) * rows(B)");
  const DenseMatrix wm = DenseMatrix::unvec(w, b.rows(), a.cols());
  const DenseMatrix y = detail::lu_solve(b, wm, "kron_solve_vec(B)");          // B^-1 W
  const DenseMatrix z = detail::lu_solve(a, y.transpose(), "kron_solve_vec(A)");  // A^-1 (B^-1 W)^T
  return z.transpose().vec();
}

}  // namespace snopt
