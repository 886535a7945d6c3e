#pragma once

// Small dense symmetric solver used by the regression models.
//
// solve_spd() factors A = L L^T and back-substitutes every right-hand side.
// When A is singular (or numerically so) it falls back to the Moore-Penrose
// pseudo-inverse built from a cyclic Jacobi eigendecomposition, which for
// normal equations X^T X w = X^T y yields the minimum-norm least-squares w.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "softpuf/error.hpp"

namespace softpuf::linalg {

struct SymmetricMatrix {
  std::size_t n = 0;
  std::vector<double> a;  // row-major n*n, both triangles populated

  explicit SymmetricMatrix(std::size_t size = 0) : n(size), a(size * size, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return a[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

namespace detail {

inline bool cholesky(const SymmetricMatrix& m, std::vector<double>& lower) {
  const std::size_t n = m.n;
  lower.assign(n * n, 0.0);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(m(i, i)));
  const double tol = max_diag * static_cast<double>(n) * std::numeric_limits<double>::epsilon() * 16.0;
  for (std::size_t j = 0; j < n; ++j) {
    double d = m(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= lower[j * n + k] * lower[j * n + k];
    if (!(d > tol)) return false;
    const double ljj = std::sqrt(d);
    lower[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= lower[i * n + k] * lower[j * n + k];
      lower[i * n + j] = s / ljj;
    }
  }
  return true;
}

inline std::vector<double> cholesky_solve(const std::vector<double>& lower, std::size_t n, std::span<const double> b) {
  std::vector<double> y(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) y[i] -= lower[i * n + k] * y[k];
    y[i] /= lower[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) y[i] -= lower[k * n + i] * y[k];
    y[i] /= lower[i * n + i];
  }
  return y;
}

// Cyclic Jacobi: on return `m` is (near-)diagonal holding eigenvalues and
// `v` holds the eigenvectors as columns.
inline void jacobi_eigen(SymmetricMatrix& m, std::vector<double>& v) {
  const std::size_t n = m.n;
  v.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        total += m(i, j) * m(i, j);
        if (i != j) off += m(i, j) * m(i, j);
      }
    if (off <= total * 1e-30 || off == 0.0) return;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }
}

}  // namespace detail

struct SolveResult {
  std::vector<std::vector<double>> solutions;
  bool used_pseudo_inverse = false;
};

inline SolveResult solve_spd(const SymmetricMatrix& m, std::span<const std::vector<double>> rhs) {
  const std::size_t n = m.n;
  for (const auto& b : rhs) require(b.size() == n, "right-hand side size mismatch");
  SolveResult out;
  std::vector<double> lower;
  if (detail::cholesky(m, lower)) {
    for (const auto& b : rhs) out.solutions.push_back(detail::cholesky_solve(lower, n, b));
    return out;
  }

  out.used_pseudo_inverse = true;
  SymmetricMatrix eig = m;
  std::vector<double> v;
  detail::jacobi_eigen(eig, v);
  double max_ev = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_ev = std::max(max_ev, std::abs(eig(i, i)));
  const double cutoff = max_ev * static_cast<double>(std::max<std::size_t>(n, 1)) * 1e-12;
  for (const auto& b : rhs) {
    std::vector<double> x(n, 0.0);
    for (std::size_t e = 0; e < n; ++e) {
      const double lambda = eig(e, e);
      if (std::abs(lambda) <= cutoff) continue;
      double proj = 0.0;
      for (std::size_t i = 0; i < n; ++i) proj += v[i * n + e] * b[i];
      proj /= lambda;
      for (std::size_t i = 0; i < n; ++i) x[i] += proj * v[i * n + e];
    }
    out.solutions.push_back(std::move(x));
  }
  return out;
}

// Least squares (or ridge when lambda > 0) over an arbitrary-width design
// matrix given as rows.
inline std::vector<double> least_squares(std::span<const std::vector<double>> rows, std::span<const double> targets,
                                         double lambda = 0.0) {
  require(!rows.empty(), "least squares needs at least one row");
  require(rows.size() == targets.size(), "row/target count mismatch");
  require(lambda >= 0.0, "lambda must be non-negative");
  const std::size_t n = rows.front().size();
  SymmetricMatrix gram(n);
  std::vector<double> xty(n, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r].size() == n, "ragged design matrix");
    for (std::size_t i = 0; i < n; ++i) {
      xty[i] += rows[r][i] * targets[r];
      for (std::size_t j = 0; j < n; ++j) gram(i, j) += rows[r][i] * rows[r][j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) gram(i, i) += lambda;
  std::vector<std::vector<double>> rhs{std::move(xty)};
  return std::move(solve_spd(gram, rhs).solutions.front());
}

}  // namespace softpuf::linalg
