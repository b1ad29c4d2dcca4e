#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kcone/expr.hpp"
#include "kcone/linalg.hpp"

namespace kcone {

/// Axis-aligned box, optionally intersected with the cylinder
/// {x1^2 + x2^2 <= R^2}.
struct Domain {
  Vector lo;
  Vector hi;
  std::optional<double> cylinder_radius;

  static Domain box(Vector lo, Vector hi) {
    if (lo.size() != hi.size()) throw Error(Errc::DimensionMismatch, "domain: lo/hi sizes differ");
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
      if (!(lo(i) <= hi(i)) || !std::isfinite(lo(i)) || !std::isfinite(hi(i)))
        throw Error(Errc::EmptyDomain, "domain: bounds must be finite with lo <= hi");
    }
    return Domain{std::move(lo), std::move(hi), std::nullopt};
  }

  static Domain cube(int n, double lo, double hi) {
    return box(Vector::Constant(n, lo), Vector::Constant(n, hi));
  }

  static Domain cylinder(double radius, Vector lo, Vector hi) {
    if (lo.size() < 2) throw Error(Errc::DimensionMismatch, "cylinder domain needs dim >= 2");
    if (!(radius > 0.0)) throw Error(Errc::EmptyDomain, "cylinder radius must be positive");
    Domain d = box(std::move(lo), std::move(hi));
    d.cylinder_radius = radius;
    return d;
  }

  int dim() const { return static_cast<int>(lo.size()); }

  bool contains(const Vector& x, double slack = 0.0) const {
    if (x.size() != lo.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!(x(i) >= lo(i) - slack && x(i) <= hi(i) + slack)) return false;
    }
    if (cylinder_radius) {
      const double r = std::hypot(x(0), x(1));
      if (r > *cylinder_radius + slack) return false;
    }
    return true;
  }

  /// Diameter of the box (the cylinder only shrinks the first two extents).
  double diameter() const {
    Vector ext = hi - lo;
    if (cylinder_radius) {
      ext(0) = std::min(ext(0), 2.0 * *cylinder_radius);
      ext(1) = std::min(ext(1), 2.0 * *cylinder_radius);
    }
    return ext.norm();
  }

  /// Uniform sample by rejection from the bounding box.
  Vector sample(Rng& rng) const {
    Vector x(lo.size());
    for (int attempt = 0; attempt < 100000; ++attempt) {
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.uniform(lo(i), hi(i));
      if (contains(x)) return x;
    }
    throw Error(Errc::EmptyDomain, "domain: rejection sampling found no interior point");
  }
};

enum class FieldFamily { Linear, HopfCylinder, CyclicFeedback, CompetitiveLV, Parsed };

constexpr const char* family_name(FieldFamily f) {
  switch (f) {
    case FieldFamily::Linear: return "linear";
    case FieldFamily::HopfCylinder: return "hopf_cylinder";
    case FieldFamily::CyclicFeedback: return "cyclic_feedback";
    case FieldFamily::CompetitiveLV: return "competitive_lv";
    case FieldFamily::Parsed: return "parsed";
  }
  return "?";
}

/// A coordinate value where the field is only Lipschitz (ramp corner).
struct Kink {
  int coord;
  double value;
};

struct VectorField {
  int dim = 0;
  std::function<Vector(const Vector&)> eval;
  Domain domain;
  std::function<Matrix(const Vector&)> jacobian;  // empty when not available
  FieldFamily family = FieldFamily::Parsed;
  std::vector<int> deltas;  // cyclic feedback coupling signs, if declared
  std::vector<Kink> kinks;
  std::optional<Matrix> linear_matrix;  // set for the Linear family

  Vector operator()(const Vector& x) const { return eval(x); }
  bool has_jacobian() const { return static_cast<bool>(jacobian); }
};

/// Central-difference Jacobian, step h_j = rel * max(1, |x_j|).
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x,
                          double rel = 1e-6) {
  const Eigen::Index n = x.size();
  Matrix j(n, n);
  Vector xp = x, xm = x;
  for (Eigen::Index c = 0; c < n; ++c) {
    const double h = rel * std::max(1.0, std::abs(x(c)));
    xp(c) = x(c) + h;
    xm(c) = x(c) - h;
    j.col(c) = (f(xp) - f(xm)) / (2.0 * h);
    xp(c) = xm(c) = x(c);
  }
  return j;
}

/// The field reversed in time, used for backward orbits.
inline VectorField reversed(const VectorField& f) {
  VectorField g = f;
  g.eval = [e = f.eval](const Vector& x) -> Vector { return -e(x); };
  if (f.jacobian) g.jacobian = [j = f.jacobian](const Vector& x) -> Matrix { return -j(x); };
  if (f.linear_matrix) g.linear_matrix = -*f.linear_matrix;
  return g;
}

inline VectorField make_linear_field(const Matrix& a, Domain domain) {
  if (a.rows() != a.cols()) throw Error(Errc::DimensionMismatch, "linear field: A not square");
  if (domain.dim() != a.rows()) throw Error(Errc::DimensionMismatch, "linear field: domain dim");
  VectorField f;
  f.dim = static_cast<int>(a.rows());
  f.eval = [a](const Vector& x) -> Vector { return a * x; };
  f.jacobian = [a](const Vector&) -> Matrix { return a; };
  f.domain = std::move(domain);
  f.family = FieldFamily::Linear;
  f.linear_matrix = a;
  return f;
}

/// Hopf normal form in (x1, x2) times a decoupled contraction in x3:
///   F = (x1 - w x2 - x1 r^2,  w x1 + x2 - x2 r^2,  -c x3),  r^2 = x1^2 + x2^2.
/// The circle r = 1, x3 = 0 is an attracting cycle of period 2*pi/|w|.
inline VectorField make_hopf_cylinder(double omega, double c) {
  if (omega == 0.0 || !std::isfinite(omega)) {
    throw Error(Errc::BadParameter, "hopf_cylinder: omega must be nonzero");
  }
  if (!(c > 0.0) || !std::isfinite(c)) throw Error(Errc::BadParameter, "hopf_cylinder: c must be > 0");
  VectorField f;
  f.dim = 3;
  f.eval = [omega, c](const Vector& x) -> Vector {
    const double r2 = x(0) * x(0) + x(1) * x(1);
    Vector d(3);
    d << x(0) - omega * x(1) - x(0) * r2, omega * x(0) + x(1) - x(1) * r2, -c * x(2);
    return d;
  };
  f.jacobian = [omega, c](const Vector& x) -> Matrix {
    const double x1 = x(0), x2 = x(1), r2 = x1 * x1 + x2 * x2;
    Matrix j(3, 3);
    j << 1 - r2 - 2 * x1 * x1, -omega - 2 * x1 * x2, 0,  //
        omega - 2 * x1 * x2, 1 - r2 - 2 * x2 * x2, 0,    //
        0, 0, -c;
    return j;
  };
  f.domain = Domain::cylinder(1.2, Vector::Constant(3, -1.2), Vector::Constant(3, 1.2));
  f.domain.lo(2) = -1.0;
  f.domain.hi(2) = 1.0;
  f.family = FieldFamily::HopfCylinder;
  return f;
}

enum class CyclicKind { SmoothGoodwin, GlassPwl };

struct CyclicParams {
  double decay = 1.0;   // b: linear degradation rate
  double theta = 1.0;   // hill threshold
  double hill_n = 4.0;  // hill exponent m
  double ramp_lo = 0.4; // pwl ramp corners
  double ramp_hi = 0.6;
  double floor_slope = 0.05;  // strictly monotone floor added to the pwl ramp
};

/// Coupling functions of a cyclic feedback system, f^i(x^i, x^{i-1}).
using Coupling = std::function<double(double self, double prev)>;

/// x'^i = f^i(x^i, x^{i-1}), indices mod n. The loop closes through one
/// inhibitory coupling (delta^1 = -1, the rest +1), i.e. negative feedback.
inline VectorField make_cyclic_feedback(int n, CyclicKind kind, const CyclicParams& p = {}) {
  if (n < 3) throw Error(Errc::BadParameter, "cyclic_feedback: n must be >= 3");
  if (!(p.decay > 0.0)) throw Error(Errc::BadParameter, "cyclic_feedback: decay must be > 0");
  std::vector<Coupling> fs(static_cast<std::size_t>(n));
  VectorField f;
  if (kind == CyclicKind::SmoothGoodwin) {
    if (!(p.theta > 0.0) || !(p.hill_n >= 1.0)) {
      throw Error(Errc::BadParameter, "cyclic_feedback: need theta > 0 and hill exponent >= 1");
    }
    const double tm = std::pow(p.theta, p.hill_n);
    fs[0] = [=](double self, double prev) {
      return tm / (tm + std::pow(prev, p.hill_n)) - p.decay * self;
    };
    for (int i = 1; i < n; ++i) fs[static_cast<std::size_t>(i)] = [=](double self, double prev) {
      return prev - p.decay * self;
    };
    f.domain = Domain::cube(n, 0.05, 3.0);
  } else {
    if (!(p.ramp_lo < p.ramp_hi) || !(p.floor_slope > 0.0)) {
      throw Error(Errc::BadParameter, "cyclic_feedback: need ramp_lo < ramp_hi and floor_slope > 0");
    }
    const double lo = p.ramp_lo, hi = p.ramp_hi, s = p.floor_slope;
    fs[0] = [=](double self, double prev) {
      return Expression::pwl(prev, hi, lo) - s * prev - p.decay * self;
    };
    for (int i = 1; i < n; ++i) fs[static_cast<std::size_t>(i)] = [=](double self, double prev) {
      return Expression::pwl(prev, lo, hi) + s * prev - p.decay * self;
    };
    f.domain = Domain::cube(n, 0.0, 1.5);
    for (int i = 0; i < n; ++i) {
      f.kinks.push_back({i, lo});
      f.kinks.push_back({i, hi});
    }
  }
  f.dim = n;
  f.eval = [fs, n](const Vector& x) -> Vector {
    Vector d(n);
    for (int i = 0; i < n; ++i) {
      const int prev = (i + n - 1) % n;
      d(i) = fs[static_cast<std::size_t>(i)](x(i), x(prev));
    }
    return d;
  };
  if (kind == CyclicKind::SmoothGoodwin) {
    f.jacobian = [=](const Vector& x) -> Matrix {
      Matrix j = Matrix::Zero(n, n);
      for (int i = 0; i < n; ++i) j(i, i) = -p.decay;
      const double tm = std::pow(p.theta, p.hill_n);
      const double xm = std::pow(x(n - 1), p.hill_n);
      const double dxm = p.hill_n * std::pow(x(n - 1), p.hill_n - 1.0);
      j(0, n - 1) = -tm * dxm / ((tm + xm) * (tm + xm));
      for (int i = 1; i < n; ++i) j(i, i - 1) = 1.0;
      return j;
    };
  }
  f.family = FieldFamily::CyclicFeedback;
  f.deltas.assign(static_cast<std::size_t>(n), 1);
  f.deltas[0] = -1;
  return f;
}

/// x'_i = x_i (r_i - sum_j A_ij x_j) on [0, U]^n with U = 2 max_i r_i / A_ii.
inline VectorField make_competitive_lv(const Matrix& a, const Vector& r) {
  const Eigen::Index n = r.size();
  if (a.rows() != n || a.cols() != n || n < 2) {
    throw Error(Errc::DimensionMismatch, "competitive_lv: A must be n x n with n = size(r) >= 2");
  }
  if ((a.array() < 0.0).any() || !a.allFinite()) {
    throw Error(Errc::BadParameter, "competitive_lv: interaction entries must be >= 0");
  }
  if ((r.array() <= 0.0).any() || !r.allFinite()) {
    throw Error(Errc::BadParameter, "competitive_lv: growth rates must be > 0");
  }
  double upper = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(a(i, i) > 0.0)) throw Error(Errc::BadParameter, "competitive_lv: A_ii must be > 0");
    upper = std::max(upper, r(i) / a(i, i));
  }
  VectorField f;
  f.dim = static_cast<int>(n);
  f.eval = [a, r](const Vector& x) -> Vector {
    return (x.array() * (r - a * x).array()).matrix();
  };
  f.jacobian = [a, r](const Vector& x) -> Matrix {
    Matrix j = -(x.asDiagonal() * a);
    j.diagonal() += r - a * x;
    return j;
  };
  f.domain = Domain::cube(static_cast<int>(n), 0.0, 2.0 * upper);
  f.family = FieldFamily::CompetitiveLV;
  return f;
}

/// Field from one expression per coordinate over x1..xn.
inline VectorField parse_field(const std::vector<std::string>& exprs,
                               const std::map<std::string, double>& params, Domain domain) {
  const int n = static_cast<int>(exprs.size());
  if (n == 0) throw Error(Errc::DimensionMismatch, "parse_field: no expressions");
  if (domain.dim() != n) throw Error(Errc::DimensionMismatch, "parse_field: domain dimension");
  std::vector<Expression> compiled;
  compiled.reserve(exprs.size());
  for (const auto& e : exprs) compiled.push_back(parse_expression(e, n, params));
  VectorField f;
  f.dim = n;
  f.eval = [compiled, n](const Vector& x) -> Vector {
    Vector d(n);
    const std::span<const double> vars(x.data(), static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) d(i) = compiled[static_cast<std::size_t>(i)].eval(vars);
    return d;
  };
  f.domain = std::move(domain);
  f.family = FieldFamily::Parsed;
  return f;
}

}  // namespace kcone
