#pragma once

#include <vector>

#include "kcone/field.hpp"

namespace kcone {

struct Equilibrium {
  Vector point;
  double residual;  // ||F(point)||
  int seed_index;
};

struct EquilibriumSearch {
  std::vector<Equilibrium> equilibria;
  int dropped_seeds = 0;  // seeds whose Newton run did not reach tol_eq
  double tol_eq = 0.0;
};

/// Damped Newton from every seed (finite-difference Jacobian unless the field
/// provides one; step halving while the residual does not decrease).
/// Converged points inside the domain are deduplicated within `dedup`.
inline EquilibriumSearch find_equilibria(const VectorField& field, const std::vector<Vector>& seeds,
                                         double tol_eq = 1e-10, int max_iter = 100,
                                         double dedup = 1e-6) {
  EquilibriumSearch out;
  out.tol_eq = tol_eq;
  const double slack = 1e-9 * std::max(1.0, field.domain.diameter());
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    Vector x = seeds[si];
    require_dim(x, field.dim, "find_equilibria seed");
    Vector fx = field(x);
    double res = fx.norm();
    bool ok = std::isfinite(res);
    for (int it = 0; ok && it < max_iter && res > tol_eq; ++it) {
      const Matrix j = field.has_jacobian() ? field.jacobian(x) : fd_jacobian(field.eval, x);
      Eigen::FullPivLU<Matrix> lu(j);
      if (!lu.isInvertible()) {
        ok = false;
        break;
      }
      const Vector dx = lu.solve(-fx);
      double step = 1.0;
      bool improved = false;
      for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
        const Vector xt = x + step * dx;
        const Vector ft = field(xt);
        const double rt = ft.norm();
        if (std::isfinite(rt) && rt < res) {
          x = xt;
          fx = ft;
          res = rt;
          improved = true;
          break;
        }
      }
      if (!improved) ok = false;
    }
    if (!ok || !(res <= tol_eq) || !field.domain.contains(x, slack)) {
      ++out.dropped_seeds;
      continue;
    }
    bool duplicate = false;
    for (const auto& e : out.equilibria) {
      if ((e.point - x).norm() <= dedup) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) out.equilibria.push_back({x, res, static_cast<int>(si)});
  }
  return out;
}

/// Seeds on a regular grid with `per_axis` points per coordinate, plus the
/// domain center (cylinder-excluded points are skipped).
inline std::vector<Vector> grid_seeds(const Domain& d, int per_axis = 3) {
  std::vector<Vector> seeds;
  const int n = d.dim();
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (;;) {
    Vector x(n);
    for (int i = 0; i < n; ++i) {
      const double u = per_axis == 1 ? 0.5 : static_cast<double>(idx[static_cast<std::size_t>(i)]) / (per_axis - 1);
      x(i) = d.lo(i) + u * (d.hi(i) - d.lo(i));
    }
    if (d.contains(x)) seeds.push_back(x);
    int c = 0;
    while (c < n && ++idx[static_cast<std::size_t>(c)] == per_axis) idx[static_cast<std::size_t>(c++)] = 0;
    if (c == n) break;
  }
  seeds.push_back(0.5 * (d.lo + d.hi));
  return seeds;
}

}  // namespace kcone
