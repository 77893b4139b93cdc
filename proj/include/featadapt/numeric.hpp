#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "featadapt/errors.hpp"
#include "featadapt/tensor.hpp"

namespace featadapt {

struct Svd {
  // Left singular vectors as columns of u (p x q), paired with singular_values.
  Tensor u;
  std::vector<double> singular_values;

  double max_singular_value() const {
    double m = 0.0;
    for (double s : singular_values) m = std::max(m, s);
    return m;
  }

  /// Numerical rank with singular values <= rel_cutoff * sigma_max treated as zero.
  std::size_t rank(double rel_cutoff = 1e-10) const {
    const double cutoff = rel_cutoff * max_singular_value();
    std::size_t r = 0;
    for (double s : singular_values) {
      if (s > cutoff) ++r;
    }
    return r;
  }
};

/// One-sided Jacobi SVD: orthogonalizes the columns of a working copy by plane
/// rotations until convergence, yielding A = U * diag(sigma) * V^T. Only U and
/// sigma are returned; adequate and robust at the matrix sizes used here.
inline Svd jacobi_svd(const Tensor& a, int max_sweeps = 60) {
  const std::size_t p = a.rows(), q = a.cols();
  std::vector<double> g(a.data().begin(), a.data().end());  // p x q, row-major

  auto col_dot = [&](std::size_t ci, std::size_t cj) {
    double s = 0.0;
    for (std::size_t r = 0; r < p; ++r) s += g[r * q + ci] * g[r * q + cj];
    return s;
  };

  const double tol = 1e-14;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < q; ++i) {
      for (std::size_t j = i + 1; j < q; ++j) {
        const double aii = col_dot(i, i);
        const double ajj = col_dot(j, j);
        const double aij = col_dot(i, j);
        if (std::abs(aij) <= tol * std::sqrt(aii * ajj) || aij == 0.0) continue;
        rotated = true;
        const double zeta = (ajj - aii) / (2.0 * aij);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t r = 0; r < p; ++r) {
          const double gi = g[r * q + i];
          const double gj = g[r * q + j];
          g[r * q + i] = cs * gi - sn * gj;
          g[r * q + j] = sn * gi + cs * gj;
        }
      }
    }
    if (!rotated) break;
  }

  Svd result{Tensor(p, q), std::vector<double>(q, 0.0)};
  auto u = result.u.data();
  for (std::size_t c = 0; c < q; ++c) {
    double norm = 0.0;
    for (std::size_t r = 0; r < p; ++r) norm += g[r * q + c] * g[r * q + c];
    norm = std::sqrt(norm);
    result.singular_values[c] = norm;
    if (norm > 0.0) {
      for (std::size_t r = 0; r < p; ++r) u[r * q + c] = g[r * q + c] / norm;
    }
  }
  return result;
}

inline double frobenius_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

/// Frobenius norm of the component of `m` orthogonal to col(basis), where
/// basis columns with sigma <= rel_cutoff * sigma_max are dropped.
inline double residual_outside_column_space(const Tensor& basis, const Tensor& m,
                                            double rel_cutoff = 1e-10) {
  if (basis.rows() != m.rows()) {
    throw ShapeError("residual_outside_column_space: row mismatch " +
                     basis.shape().str() + " vs " + m.shape().str());
  }
  const Svd svd = jacobi_svd(basis);
  const double cutoff = rel_cutoff * svd.max_singular_value();
  const std::size_t p = m.rows(), n = m.cols(), q = basis.cols();
  auto u = svd.u.data();
  auto md = m.data();

  // R = M - U_r (U_r^T M)
  std::vector<double> r(md.begin(), md.end());
  for (std::size_t c = 0; c < q; ++c) {
    if (svd.singular_values[c] <= cutoff) continue;
    for (std::size_t j = 0; j < n; ++j) {
      double coeff = 0.0;
      for (std::size_t i = 0; i < p; ++i) coeff += u[i * q + c] * md[i * n + j];
      for (std::size_t i = 0; i < p; ++i) r[i * n + j] -= coeff * u[i * q + c];
    }
  }
  double s = 0.0;
  for (double v : r) s += v * v;
  return std::sqrt(s);
}

}  // namespace featadapt
