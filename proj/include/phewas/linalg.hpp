#pragma once

// Small dense symmetric-matrix helpers used by the synthetic generator and
// the LDA solver: cyclic Jacobi eigendecomposition, Cholesky, and
// Gauss-Jordan solve with partial pivoting. Sizes here are tens of columns,
// so O(n^3) is fine.

#include <cmath>
#include <cstddef>
#include <vector>

#include "phewas/errors.hpp"

namespace phewas::linalg {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

struct EigenSym {
  std::vector<double> values;  // unsorted, matches vectors columns
  Matrix vectors;              // column j is the eigenvector of values[j]
};

// Cyclic Jacobi rotations; input must be symmetric.
inline EigenSym eigen_symmetric(Matrix a, int max_sweeps = 64) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ValidationError("eigen_symmetric: not square");
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::fabs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t =
            (theta >= 0 ? 1.0 : -1.0) /
            (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
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
  EigenSym out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i);
  out.vectors = std::move(v);
  return out;
}

// Lower-triangular Cholesky factor of a positive-definite matrix.
inline Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 0.0)
          throw DegenerateInputError("cholesky: matrix not positive definite");
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  return l;
}

// Solve A x = b for symmetric positive (semi)definite A with partial
// pivoting Gauss-Jordan; A is copied.
inline std::vector<double> solve(Matrix a, std::vector<double> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n)
    throw ValidationError("solve: shape mismatch");
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a(r, col)) > std::fabs(a(piv, col))) piv = r;
    if (std::fabs(a(piv, col)) < 1e-300)
      throw DegenerateInputError("solve: singular matrix");
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(piv, c), a(col, c));
      std::swap(b[piv], b[col]);
    }
    const double d = a(col, col);
    for (std::size_t c = 0; c < n; ++c) a(col, c) /= d;
    b[col] /= d;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }
  return b;
}

struct PdRepair {
  Matrix matrix;
  double frobenius_delta = 0.0;
};

// Nearest-PD repair of a correlation matrix: clip eigenvalues at min_eig,
// reassemble, renormalize to unit diagonal. Reports the Frobenius-norm
// change.
inline PdRepair nearest_pd_correlation(const Matrix& a,
                                       double min_eig = 1e-8) {
  const std::size_t n = a.rows();
  EigenSym es = eigen_symmetric(a);
  Matrix repaired(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double lam = std::max(es.values[k], min_eig);
        s += es.vectors(i, k) * lam * es.vectors(j, k);
      }
      repaired(i, j) = s;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j)
        repaired(i, j) /= std::sqrt(repaired(i, i) * repaired(j, j));
  for (std::size_t i = 0; i < n; ++i) repaired(i, i) = 1.0;
  PdRepair out;
  double delta = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double d = repaired(i, j) - a(i, j);
      delta += d * d;
    }
  out.frobenius_delta = std::sqrt(delta);
  out.matrix = std::move(repaired);
  return out;
}

}  // namespace phewas::linalg
