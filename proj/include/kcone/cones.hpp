#pragma once

#include <concepts>
#include <string>
#include <variant>

#include "kcone/linalg.hpp"

namespace kcone {

inline constexpr double kDefaultBand = 1e-9;

// A cone exposes a normalized signed margin for nonzero v: negative inside
// the interior, positive outside the closed cone, ~0 on the boundary.
template <class C>
concept Cone = requires(const C& c, const Vector& v) {
  { c.dim() } -> std::convertible_to<int>;
  { c.rank() } -> std::convertible_to<int>;
  { c.band() } -> std::convertible_to<double>;
  { c.margin(v) } -> std::convertible_to<double>;
};

/// C^-(P) = {x : x^T P x <= 0} for symmetric nonsingular P with k negative
/// eigenvalues. The negative eigenspace H lies in the interior (k-solid), the
/// positive eigenspace H^c meets the cone only at 0 (complemented).
class QuadraticCone {
 public:
  const Matrix& matrix() const noexcept { return p_; }
  const SymEig& eigen() const noexcept { return eig_; }
  int dim() const noexcept { return static_cast<int>(p_.rows()); }
  int rank() const noexcept { return rank_; }
  double band() const noexcept { return band_; }

  /// Orthonormal basis of H (n x k).
  Matrix negative_basis() const { return eig_.vectors.leftCols(rank_); }
  /// Orthonormal basis of H^c (n x (n-k)).
  Matrix positive_basis() const { return eig_.vectors.rightCols(dim() - rank_); }

  double quad_form(const Vector& v) const {
    require_dim(v, p_.rows(), "quad_form");
    const Eigen::Index n = p_.rows();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double row = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) row += p_(i, j) * v(j);
      acc += v(i) * row;
    }
    return acc;
  }

  double margin(const Vector& v) const {
    const double nn = v.squaredNorm();
    return quad_form(v) / nn;
  }

  bool contains(const Vector& v) const {
    return v.squaredNorm() == 0.0 || margin(v) <= band_;
  }

 private:
  friend QuadraticCone make_quadratic_cone(const Matrix& p, double band);
  Matrix p_;
  SymEig eig_;
  int rank_ = 0;
  double band_ = kDefaultBand;
};

inline QuadraticCone make_quadratic_cone(const Matrix& p, double band = kDefaultBand) {
  if (p.rows() != p.cols()) {
    throw Error(Errc::DimensionMismatch, "make_quadratic_cone: P is not square");
  }
  if (p.rows() < 2) {
    throw Error(Errc::DimensionMismatch, "make_quadratic_cone: dimension must be >= 2");
  }
  if (!p.allFinite()) {
    throw Error(Errc::BadParameter, "make_quadratic_cone: P has non-finite entries");
  }
  if (!(band > 0.0)) {
    throw Error(Errc::BadParameter, "make_quadratic_cone: boundary band must be positive");
  }
  const double scale = max_abs(p);
  if (max_abs(p - p.transpose()) > 1e-12 * scale) {
    throw Error(Errc::NotSymmetric, "make_quadratic_cone: P is not symmetric");
  }
  QuadraticCone c;
  c.p_ = 0.5 * (p + p.transpose());
  c.eig_ = sym_eig(c.p_);
  c.band_ = band;
  const double largest = c.eig_.values.cwiseAbs().maxCoeff();
  const double smallest = c.eig_.values.cwiseAbs().minCoeff();
  if (!(smallest > 1e-10 * largest)) {
    throw Error(Errc::NearSingular, "make_quadratic_cone: P is (nearly) singular");
  }
  int k = 0;
  for (Eigen::Index i = 0; i < c.eig_.values.size(); ++i)
    if (c.eig_.values(i) < 0.0) ++k;
  if (k == 0 || k == c.dim()) {
    throw Error(Errc::DegenerateRank,
                "make_quadratic_cone: need 0 < k < n negative eigenvalues, got k=" +
                    std::to_string(k));
  }
  c.rank_ = k;
  return c;
}

inline double quad_form(const QuadraticCone& c, const Vector& v) { return c.quad_form(v); }

/// Closure of the complement of int K ∪ -int K, K the positive orthant. A
/// rank-(n-1) cone: it holds the hyperplane {sum v = 0} and its complemented
/// cone is the diagonal line, of rank 1.
class OrthantComplementCone {
 public:
  explicit OrthantComplementCone(int n, double band = kDefaultBand) : n_(n), band_(band) {
    if (n < 2) throw Error(Errc::DimensionMismatch, "orthant_complement: dimension must be >= 2");
    if (!(band > 0.0)) throw Error(Errc::BadParameter, "orthant_complement: band must be positive");
  }
  int dim() const noexcept { return n_; }
  int rank() const noexcept { return n_ - 1; }
  double band() const noexcept { return band_; }

  // Mixed-sign vectors: -(smaller of largest positive and largest negative
  // magnitude). One-signed vectors: distance of the weakest component from 0.
  double margin(const Vector& v) const {
    require_dim(v, n_, "orthant_complement");
    return std::max(v.minCoeff(), -v.maxCoeff()) / v.norm();
  }

  bool contains(const Vector& v) const { return v.squaredNorm() == 0.0 || margin(v) <= band_; }

 private:
  int n_;
  double band_;
};

/// K ∪ (-K) for K the closed positive orthant: the classical rank-1 order cone.
class ConvexUnionCone {
 public:
  explicit ConvexUnionCone(int n, double band = kDefaultBand) : n_(n), band_(band) {
    if (n < 2) throw Error(Errc::DimensionMismatch, "orthant_union: dimension must be >= 2");
    if (!(band > 0.0)) throw Error(Errc::BadParameter, "orthant_union: band must be positive");
  }
  int dim() const noexcept { return n_; }
  int rank() const noexcept { return 1; }
  double band() const noexcept { return band_; }

  double margin(const Vector& v) const {
    require_dim(v, n_, "orthant_union");
    return -std::max(v.minCoeff(), -v.maxCoeff()) / v.norm();
  }

  bool contains(const Vector& v) const { return v.squaredNorm() == 0.0 || margin(v) <= band_; }

 private:
  int n_;
  double band_;
};

static_assert(Cone<QuadraticCone> && Cone<OrthantComplementCone> && Cone<ConvexUnionCone>);

/// Runtime-selected cone, as read from scenario files.
class AnyCone {
 public:
  using Storage = std::variant<QuadraticCone, OrthantComplementCone, ConvexUnionCone>;

  AnyCone(QuadraticCone c) : impl_(std::move(c)) {}
  AnyCone(OrthantComplementCone c) : impl_(c) {}
  AnyCone(ConvexUnionCone c) : impl_(c) {}

  int dim() const { return std::visit([](const auto& c) { return c.dim(); }, impl_); }
  int rank() const { return std::visit([](const auto& c) { return c.rank(); }, impl_); }
  double band() const { return std::visit([](const auto& c) { return c.band(); }, impl_); }
  double margin(const Vector& v) const {
    return std::visit([&](const auto& c) { return c.margin(v); }, impl_);
  }

  const QuadraticCone* quadratic() const { return std::get_if<QuadraticCone>(&impl_); }
  const Storage& storage() const noexcept { return impl_; }

  std::string type_name() const {
    switch (impl_.index()) {
      case 0: return "quadratic";
      case 1: return "orthant_complement";
      default: return "orthant_union";
    }
  }

 private:
  Storage impl_;
};

static_assert(Cone<AnyCone>);

enum class Relation { StronglyOrdered, BoundaryOrdered, Unordered };

constexpr const char* relation_name(Relation r) {
  switch (r) {
    case Relation::StronglyOrdered: return "StronglyOrdered";
    case Relation::BoundaryOrdered: return "BoundaryOrdered";
    case Relation::Unordered: return "Unordered";
  }
  return "?";
}

struct OrderRelation {
  Relation relation;
  double margin;

  bool ordered() const noexcept { return relation != Relation::Unordered; }
};

inline Relation classify_margin(double margin, double band) {
  if (margin < -band) return Relation::StronglyOrdered;
  if (margin > band) return Relation::Unordered;
  return Relation::BoundaryOrdered;
}

inline bool distinguishable(const Vector& x, const Vector& y, double rel = 1e-14) {
  return (x - y).norm() > rel * std::max({x.norm(), y.norm(), 1.0});
}

template <Cone C>
OrderRelation relate(const C& cone, const Vector& x, const Vector& y) {
  require_dim(x, cone.dim(), "relate");
  require_dim(y, cone.dim(), "relate");
  if (!distinguishable(x, y)) {
    throw Error(Errc::IdenticalPoints, "relate: points coincide");
  }
  const double m = cone.margin(x - y);
  return {classify_margin(m, cone.band()), m};
}

/// Linear projection onto H along H^c.
struct Projector {
  Matrix theta;  // n x n, idempotent
  Matrix basis;  // n x k orthonormal basis of H
  int range_dim = 0;

  Vector apply(const Vector& v) const { return theta * v; }
  /// Coordinates of the projection in the basis of H.
  Vector coords(const Vector& v) const { return basis.transpose() * v; }
};

/// For symmetric P the eigenspaces are orthogonal, so the projection along
/// H^c is the orthogonal projector sum of v_i v_i^T over negative eigenvalues.
inline Projector make_projector(const QuadraticCone& c) {
  Projector out;
  out.basis = c.negative_basis();
  out.theta = out.basis * out.basis.transpose();
  out.range_dim = c.rank();
  return out;
}

}  // namespace kcone
