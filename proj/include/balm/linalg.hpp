#pragma once

// Dense linear algebra used by every solver: a row-major matrix type, vector
// helpers, Cholesky factorization, power iteration and H-weighted norms.
// Problems handled here are desk scale (a few hundred rows), so everything is
// dense and single threaded.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "balm/error.hpp"

namespace balm {

using Vector = std::vector<double>;

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require_dims(data_.size() == rows_ * cols_,
                         "matrix data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(rows_) + "x" +
                             std::to_string(cols_));
  }
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      detail::require_dims(row.size() == cols_, "ragged matrix literal");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static DenseMatrix identity(std::size_t n, double scale = 1.0) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = scale;
    return m;
  }

  static DenseMatrix diagonal(std::span<const double> d) {
    DenseMatrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  const std::vector<double>& data() const noexcept { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  bool is_zero() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return v == 0.0; });
  }

  bool is_diagonal() const {
    if (!square()) return false;
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j)
        if (i != j && (*this)(i, j) != 0.0) return false;
    return true;
  }

  DenseMatrix transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  DenseMatrix& operator+=(const DenseMatrix& other) {
    detail::require_dims(rows_ == other.rows_ && cols_ == other.cols_,
                         "matrix sum shape");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
  }

  DenseMatrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Vector helpers

inline double dot(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(a.size() == b.size(), "dot product lengths");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline Vector add(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(a.size() == b.size(), "vector sum lengths");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Vector sub(std::span<const double> a, std::span<const double> b) {
  detail::require_dims(a.size() == b.size(), "vector difference lengths");
  Vector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Vector scaled(std::span<const double> a, double s) {
  Vector out(a.begin(), a.end());
  for (double& v : out) v *= s;
  return out;
}

// y += s * x
inline void axpy(double s, std::span<const double> x, std::span<double> y) {
  detail::require_dims(x.size() == y.size(), "axpy lengths");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Matrix products

inline Vector multiply(const DenseMatrix& a, std::span<const double> x) {
  detail::require_dims(a.cols() == x.size(), "A*x: A has " +
                                                 std::to_string(a.cols()) +
                                                 " cols, x has " +
                                                 std::to_string(x.size()));
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

inline Vector multiply_transposed(const DenseMatrix& a, std::span<const double> y) {
  detail::require_dims(a.rows() == y.size(), "A^T*y: A has " +
                                                 std::to_string(a.rows()) +
                                                 " rows, y has " +
                                                 std::to_string(y.size()));
  Vector x(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) axpy(y[i], a.row(i), x);
  return x;
}

inline DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
  detail::require_dims(a.cols() == b.rows(), "matrix product shape");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

/// A·Aᵀ, exactly symmetric (each pair of entries is the same sum).
inline DenseMatrix gram_rows(const DenseMatrix& a) {
  DenseMatrix g(a.rows(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = dot(a.row(i), a.row(j));
      g(i, j) = v;
      g(j, i) = v;
    }
  return g;
}

/// Aᵀ·A, exactly symmetric.
inline DenseMatrix gram_cols(const DenseMatrix& a) {
  return gram_rows(a.transposed());
}

inline double frobenius_norm(const DenseMatrix& a) { return norm2(a.data()); }

inline bool is_symmetric(const DenseMatrix& m, double tol = 1e-12) {
  if (!m.square()) return false;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const double scale = std::max({1.0, std::abs(m(i, j)), std::abs(m(j, i))});
      if (std::abs(m(i, j) - m(j, i)) > tol * scale) return false;
    }
  return true;
}

// ---------------------------------------------------------------------------
// Cholesky

inline constexpr double kPivotThreshold = 1e-14;

/// Lower-triangular factor L of a symmetric positive definite M = L·Lᵀ.
class SpdFactor {
 public:
  SpdFactor() = default;
  explicit SpdFactor(DenseMatrix lower) : lower_(std::move(lower)) {}

  std::size_t dim() const noexcept { return lower_.rows(); }
  const DenseMatrix& lower_factor() const noexcept { return lower_; }

  /// L·Lᵀ, i.e. the matrix that was factored (up to rounding).
  DenseMatrix reconstruct() const {
    return multiply(lower_, lower_.transposed());
  }

 private:
  DenseMatrix lower_;
};

inline SpdFactor cholesky_factor(const DenseMatrix& m) {
  detail::require_dims(m.square(), "cholesky of a non-square matrix");
  if (!m.all_finite())
    detail::fail(ErrorKind::kNotPositiveDefinite, "matrix has non-finite entries");
  if (!is_symmetric(m))
    detail::fail(ErrorKind::kNotPositiveDefinite, "matrix is not symmetric");
  const std::size_t n = m.rows();
  DenseMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = m(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > kPivotThreshold))
      detail::fail(ErrorKind::kNotPositiveDefinite,
                   "pivot " + std::to_string(d) + " at column " + std::to_string(j));
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return SpdFactor(std::move(l));
}

inline Vector solve_spd(const SpdFactor& f, std::span<const double> rhs) {
  const std::size_t n = f.dim();
  detail::require_dims(rhs.size() == n, "solve_spd: factor dim " +
                                            std::to_string(n) + ", rhs " +
                                            std::to_string(rhs.size()));
  const DenseMatrix& l = f.lower_factor();
  Vector v(rhs.begin(), rhs.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = v[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * v[k];
    v[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = v[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * v[k];
    v[ii] = s / l(ii, ii);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Spectral norm

struct PowerIterationOptions {
  double rel_tol = 1e-8;
  int max_iters = 10000;
  std::uint64_t seed = 0x5eed;
};

/// ‖AᵀA‖₂, the largest eigenvalue of AᵀA, by power iteration on AᵀA from a
/// seeded random start.
inline double spectral_norm_sq(const DenseMatrix& a,
                               const PowerIterationOptions& opts = {}) {
  if (a.rows() == 0 || a.cols() == 0 || a.is_zero())
    detail::fail(ErrorKind::kInvalidDims, "spectral_norm_sq of a zero matrix");
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss;
  Vector v(a.cols());
  for (double& x : v) x = gauss(rng);
  double estimate = 0.0;
  for (int it = 0; it < opts.max_iters; ++it) {
    const double nv = norm2(v);
    for (double& x : v) x /= nv;
    Vector w = multiply_transposed(a, multiply(a, v));
    const double next = dot(v, w);  // Rayleigh quotient, ‖v‖ = 1
    const double nw = norm2(w);
    if (nw == 0.0) {
      // Start landed in the null space; restart from a fresh direction.
      for (double& x : v) x = gauss(rng);
      continue;
    }
    if (it > 0 && std::abs(next - estimate) <= opts.rel_tol * std::abs(next)) {
      // The norm of AᵀA·v bounds the Rayleigh quotient from above and
      // converges to the same limit; report the larger of the two.
      return std::max(next, nw);
    }
    estimate = next;
    v = std::move(w);
  }
  detail::fail(ErrorKind::kNoConvergence,
               "power iteration did not settle in " +
                   std::to_string(opts.max_iters) + " iterations");
}

/// vᵀHv.
inline double h_quadratic(const DenseMatrix& h, std::span<const double> v) {
  detail::require_dims(h.square() && h.rows() == v.size(),
                       "h_quadratic: H is " + std::to_string(h.rows()) + "x" +
                           std::to_string(h.cols()) + ", v has " +
                           std::to_string(v.size()));
  return dot(v, multiply(h, v));
}

}  // namespace balm
