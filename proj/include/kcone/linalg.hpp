#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "kcone/error.hpp"

namespace kcone {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require_dim(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw Error(Errc::DimensionMismatch, std::string(what) + ": expected dimension " +
                                             std::to_string(n) + ", got " +
                                             std::to_string(v.size()));
  }
}

struct SymEig {
  Vector values;   // ascending
  Matrix vectors;  // column i pairs with values(i); orthonormal
  int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for small dense symmetric matrices.
///
/// Only the symmetric part of `a` is used. Eigenvectors are sign-normalized so
/// that their first largest-magnitude component is positive, which makes the
/// output reproducible independent of rotation order.
inline SymEig sym_eig(const Matrix& a, int max_sweeps = 100) {
  if (a.rows() != a.cols()) {
    throw Error(Errc::DimensionMismatch, "sym_eig: matrix is not square");
  }
  const Eigen::Index n = a.rows();
  Matrix m = 0.5 * (a + a.transpose());
  Matrix v = Matrix::Identity(n, n);
  const double scale = std::max(m.norm(), std::numeric_limits<double>::min());

  int sweep = 0;
  for (;; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
    if (std::sqrt(off) <= 1e-15 * scale || off == 0.0) break;
    if (sweep >= max_sweeps) {
      throw Error(Errc::NoConvergence, "sym_eig: Jacobi sweep cap reached");
    }
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = m(p, q);
        if (apq == 0.0) continue;
        const double tau = (m(q, q) - m(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        // m <- J^T m J with J the (p,q) rotation [[c, s], [-s, c]]
        for (Eigen::Index k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - s * mkq;
          m(k, q) = s * mkp + c * mkq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - s * mqk;
          m(q, k) = s * mpk + c * mqk;
        }
        m(p, q) = m(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return m(i, i) < m(j, j); });

  SymEig out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  out.sweeps = sweep;
  for (Eigen::Index c = 0; c < n; ++c) {
    const Eigen::Index src = order[static_cast<std::size_t>(c)];
    out.values(c) = m(src, src);
    Vector col = v.col(src);
    const double biggest = col.cwiseAbs().maxCoeff();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (std::abs(col(k)) >= biggest * (1.0 - 1e-12)) {
        if (col(k) < 0.0) col = -col;
        break;
      }
    }
    out.vectors.col(c) = col;
  }
  return out;
}

/// Deterministic uniform source. The mapping from generator bits to doubles
/// is fixed here so sampled certificates are reproducible across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace kcone
