#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "kcone/cones.hpp"
#include "kcone/integrate.hpp"
#include "kcone/parallel.hpp"

namespace kcone {

enum class Condition { PairwiseLambda, SmithEpsilon, LinearLMI, CyclicFeedback };

constexpr const char* condition_name(Condition c) {
  switch (c) {
    case Condition::PairwiseLambda: return "PairwiseLambda";
    case Condition::SmithEpsilon: return "SmithEpsilon";
    case Condition::LinearLMI: return "LinearLMI";
    case Condition::CyclicFeedback: return "CyclicFeedback";
  }
  return "?";
}

enum class Verdict { Pass, Fail };

constexpr const char* verdict_name(Verdict v) { return v == Verdict::Pass ? "Pass" : "Fail"; }

/// Sampled evidence for a monotonicity condition. Margins are normalized by
/// ||x - y||^2 and negative margins satisfy the condition. A Pass is
/// evidence on the sample, not a proof over the domain.
struct CertificateReport {
  Condition condition = Condition::PairwiseLambda;
  double lambda = 0.0;
  double epsilon = 0.0;       // requested epsilon (Smith only)
  double epsilon_star = std::numeric_limits<double>::quiet_NaN();  // -worst_margin
  std::size_t n_samples = 0;  // pairs (or points) actually evaluated
  std::size_t n_skipped = 0;  // degenerate pairs dropped
  double worst_margin = -std::numeric_limits<double>::infinity();
  Vector worst_x;
  Vector worst_y;
  Verdict verdict = Verdict::Fail;
  double band = kDefaultBand;
  int feedback_sign = 0;  // cyclic feedback only: +1 positive, -1 negative
  std::uint64_t seed = 0;

  bool passed() const noexcept { return verdict == Verdict::Pass; }
};

/// (x-y)^T P [F(x) - F(y) + lambda (x-y)] / ||x-y||^2.
inline double pair_margin(const VectorField& f, const QuadraticCone& c, double lambda,
                          const Vector& x, const Vector& y) {
  require_dim(x, c.dim(), "pair_margin");
  require_dim(y, c.dim(), "pair_margin");
  if (f.dim != c.dim()) throw Error(Errc::DimensionMismatch, "pair_margin: field/cone dimension");
  if (!distinguishable(x, y)) throw Error(Errc::IdenticalPoints, "pair_margin: x == y");
  const double slack = 1e-12 * std::max(1.0, f.domain.diameter());
  if (!f.domain.contains(x, slack) || !f.domain.contains(y, slack)) {
    throw Error(Errc::DomainViolation, "pair_margin: point outside the field's domain");
  }
  const Vector d = x - y;
  const Vector rhs = f(x) - f(y) + lambda * d;
  return d.dot(c.matrix() * rhs) / d.squaredNorm();
}

namespace detail {

struct PairSweep {
  std::vector<double> margins;  // NaN for skipped pairs
  std::vector<Vector> xs, ys;
  std::size_t evaluated = 0, skipped = 0;
  std::size_t worst = 0;
};

inline PairSweep sweep_pairs(const VectorField& f, const QuadraticCone& c, double lambda,
                             const Domain& domain, std::size_t n_pairs, std::uint64_t seed) {
  if (n_pairs == 0) throw Error(Errc::InvalidParameter, "certify: n_pairs must be >= 1");
  if (domain.dim() != c.dim()) throw Error(Errc::DimensionMismatch, "certify: domain dimension");
  PairSweep s;
  Rng rng(seed);
  s.xs.reserve(n_pairs);
  s.ys.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    s.xs.push_back(domain.sample(rng));
    s.ys.push_back(domain.sample(rng));
  }
  const double min_sep = 1e-10 * domain.diameter();
  s.margins.assign(n_pairs, std::numeric_limits<double>::quiet_NaN());
  parallel_for(n_pairs, [&](std::size_t i) {
    if ((s.xs[i] - s.ys[i]).norm() < min_sep || !distinguishable(s.xs[i], s.ys[i])) return;
    s.margins[i] = pair_margin(f, c, lambda, s.xs[i], s.ys[i]);
  });
  bool any = false;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    if (std::isnan(s.margins[i])) {
      ++s.skipped;
      continue;
    }
    ++s.evaluated;
    if (!any || s.margins[i] > s.margins[s.worst]) s.worst = i;
    any = true;
  }
  if (!any) throw Error(Errc::AllPairsDegenerate, "certify: every sampled pair was degenerate");
  return s;
}

}  // namespace detail

/// Pairwise lambda-condition on n_pairs uniform pairs from `domain`.
inline CertificateReport certify_sampled(const VectorField& f, const QuadraticCone& c, double lambda,
                                         const Domain& domain, std::size_t n_pairs,
                                         std::uint64_t seed) {
  const auto s = detail::sweep_pairs(f, c, lambda, domain, n_pairs, seed);
  CertificateReport r;
  r.condition = Condition::PairwiseLambda;
  r.lambda = lambda;
  r.n_samples = s.evaluated;
  r.n_skipped = s.skipped;
  r.worst_margin = s.margins[s.worst];
  r.epsilon_star = -r.worst_margin;
  r.worst_x = s.xs[s.worst];
  r.worst_y = s.ys[s.worst];
  r.band = c.band();
  r.seed = seed;
  r.verdict = r.worst_margin < -c.band() ? Verdict::Pass : Verdict::Fail;
  return r;
}

/// Smith's condition: every sampled margin <= -epsilon.
inline CertificateReport certify_smith(const VectorField& f, const QuadraticCone& c, double lambda,
                                       double epsilon, const Domain& domain, std::size_t n_pairs,
                                       std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw Error(Errc::InvalidParameter, "certify_smith: epsilon must be > 0");
  CertificateReport r = certify_sampled(f, c, lambda, domain, n_pairs, seed);
  r.condition = Condition::SmithEpsilon;
  r.epsilon = epsilon;
  r.verdict = r.worst_margin <= -epsilon ? Verdict::Pass : Verdict::Fail;
  return r;
}

/// For F(x) = A x: M = P A + A^T P + lambda P must be negative definite.
/// worst_margin is the largest eigenvalue of M; worst_x its eigenvector.
inline CertificateReport certify_linear(const Matrix& a, const QuadraticCone& c, double lambda) {
  if (a.rows() != c.dim() || a.cols() != c.dim()) {
    throw Error(Errc::DimensionMismatch, "certify_linear: A must be n x n");
  }
  const Matrix& p = c.matrix();
  const Matrix m = p * a + a.transpose() * p + lambda * p;
  const SymEig e = sym_eig(m);
  const Eigen::Index top = e.values.size() - 1;
  CertificateReport r;
  r.condition = Condition::LinearLMI;
  r.lambda = lambda;
  r.n_samples = 1;
  r.worst_margin = e.values(top);
  // Pair margins of F = A x are d^T (PA + A^T P + 2 lambda P) d / (2|d|^2), so the
  // Smith epsilon uses the doubled lambda, not M itself.
  const SymEig e2 = sym_eig(m + lambda * p);
  r.epsilon_star = -0.5 * e2.values(top);
  r.worst_x = e.vectors.col(top);
  r.worst_y = Vector::Zero(c.dim());
  r.band = c.band();
  r.verdict = r.worst_margin < -c.band() ? Verdict::Pass : Verdict::Fail;
  return r;
}

struct LambdaScan {
  std::vector<CertificateReport> reports;
  std::vector<double> passing;
};

/// certify_sampled at lambda = lo, lo + step, ..., <= hi.
inline LambdaScan scan_lambda(const VectorField& f, const QuadraticCone& c, double lo, double hi,
                              double step, const Domain& domain, std::size_t n_pairs,
                              std::uint64_t seed) {
  if (!(step > 0.0) || !(hi >= lo)) {
    throw Error(Errc::InvalidParameter, "lambda grid needs step > 0 and max >= min");
  }
  LambdaScan out;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t j = 0; j <= count; ++j) {
    const double lambda = lo + static_cast<double>(j) * step;
    out.reports.push_back(certify_sampled(f, c, lambda, domain, n_pairs, seed));
    if (out.reports.back().passed()) out.passing.push_back(lambda);
  }
  return out;
}

/// Checks delta^i dF_i/dx_{i-1} > 0 (indices mod n) by central differences
/// at n_samples uniform points. worst_margin is max of -delta^i * dF_i/dx_{i-1}
/// and worst_x the point where it occurs.
inline CertificateReport check_cyclic_feedback(const VectorField& f, const std::vector<int>& deltas,
                                               const Domain& domain, std::size_t n_samples,
                                               std::uint64_t seed) {
  const int n = f.dim;
  if (static_cast<int>(deltas.size()) != n) {
    throw Error(Errc::DimensionMismatch, "check_cyclic_feedback: need one delta per coordinate");
  }
  for (int d : deltas) {
    if (d != 1 && d != -1) throw Error(Errc::InvalidParameter, "check_cyclic_feedback: deltas must be +1/-1");
  }
  if (domain.dim() != n) throw Error(Errc::DimensionMismatch, "check_cyclic_feedback: domain dimension");
  if (n_samples == 0) throw Error(Errc::InvalidParameter, "check_cyclic_feedback: n_samples must be >= 1");

  Rng rng(seed);
  CertificateReport r;
  r.condition = Condition::CyclicFeedback;
  r.seed = seed;
  r.band = 0.0;
  bool first = true;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Vector x = domain.sample(rng);
    for (int i = 0; i < n; ++i) {
      const int prev = (i + n - 1) % n;
      const double width = domain.hi(prev) - domain.lo(prev);
      const double h = 1e-5 * (width > 0.0 ? width : 1.0);
      Vector xp = x, xm = x;
      xp(prev) += h;
      xm(prev) -= h;
      const double partial = (f(xp)(i) - f(xm)(i)) / (2.0 * h);
      if (!std::isfinite(partial)) {
        throw Error(Errc::NonFiniteDerivative,
                    "check_cyclic_feedback: non-finite derivative in coordinate " + std::to_string(i + 1));
      }
      const double score = -deltas[static_cast<std::size_t>(i)] * partial;
      if (first || score > r.worst_margin) {
        r.worst_margin = score;
        r.worst_x = x;
        first = false;
      }
    }
  }
  r.n_samples = n_samples;
  r.worst_y = Vector();
  int prod = 1;
  for (int d : deltas) prod *= d;
  r.feedback_sign = prod;
  r.verdict = r.worst_margin < 0.0 ? Verdict::Pass : Verdict::Fail;
  return r;
}

/// Same check for a system given as couplings f^i(x^i, x^{i-1}).
inline CertificateReport check_cyclic_feedback(const std::vector<Coupling>& couplings,
                                               const std::vector<int>& deltas, const Domain& domain,
                                               std::size_t n_samples, std::uint64_t seed) {
  const int n = static_cast<int>(couplings.size());
  if (n < 2) throw Error(Errc::DimensionMismatch, "check_cyclic_feedback: need >= 2 couplings");
  VectorField f;
  f.dim = n;
  f.domain = domain;
  f.family = FieldFamily::CyclicFeedback;
  f.eval = [couplings, n](const Vector& x) -> Vector {
    Vector d(n);
    for (int i = 0; i < n; ++i) d(i) = couplings[static_cast<std::size_t>(i)](x(i), x((i + n - 1) % n));
    return d;
  };
  return check_cyclic_feedback(f, deltas, domain, n_samples, seed);
}

struct DecayReport {
  std::vector<double> times;
  std::vector<double> g;       // e^{2 lambda t} V(x(t) - y(t))
  std::vector<double> margin;  // normalized cone margin of x(t) - y(t)
  double slack_rtol = 1e-8;
  bool decreasing = false;
  std::ptrdiff_t first_violation = -1;  // step index j with g[j+1] > g[j] - rtol |g[j]|
  bool initially_ordered = false;
  bool strongly_ordered_after = true;  // only meaningful when initially_ordered
  Verdict verdict = Verdict::Fail;
};

/// Integrates the pair (x, y) jointly (shared time grid) and checks that
/// t -> e^{2 lambda t} V(x(t) - y(t)) decreases strictly, and that an initially
/// ordered pair is strongly ordered at every grid time t > 0.
inline DecayReport decay_audit(const VectorField& f, const QuadraticCone& c, double lambda,
                               const Vector& x0, const Vector& y0, double T,
                               const IntegratorOptions& opt = {}, double slack_rtol = 1e-8) {
  require_dim(x0, c.dim(), "decay_audit");
  require_dim(y0, c.dim(), "decay_audit");
  if (!distinguishable(x0, y0)) throw Error(Errc::IdenticalPoints, "decay_audit: x0 == y0");
  const double slack = 1e-12 * std::max(1.0, f.domain.diameter());
  if (!f.domain.contains(x0, slack) || !f.domain.contains(y0, slack)) {
    throw Error(Errc::DomainViolation, "decay_audit: initial point outside the domain");
  }
  const int n = f.dim;
  VectorField pair;
  pair.dim = 2 * n;
  pair.eval = [&f, n](const Vector& z) -> Vector {
    Vector d(2 * n);
    d.head(n) = f(z.head(n));
    d.tail(n) = f(z.tail(n));
    return d;
  };
  Vector lo(2 * n), hi(2 * n), z0(2 * n);
  lo << f.domain.lo, f.domain.lo;
  hi << f.domain.hi, f.domain.hi;
  z0 << x0, y0;
  pair.domain = Domain::box(lo, hi);
  for (const Kink& k : f.kinks) {
    pair.kinks.push_back(k);
    pair.kinks.push_back({k.coord + n, k.value});
  }

  Trajectory tr;
  try {
    tr = integrate(pair, z0, T, opt);
  } catch (const Error& e) {
    if (e.code() == Errc::DomainViolation) throw;
    throw Error(Errc::IntegrationFailure, std::string("decay_audit: ") + e.what());
  }
  if (tr.exited_domain()) throw Error(Errc::DomainExit, "decay_audit: trajectories left the domain");

  DecayReport r;
  r.slack_rtol = slack_rtol;
  r.initially_ordered = c.contains(x0 - y0);
  for (std::size_t j = 0; j < tr.size(); ++j) {
    const Vector& z = tr.states[j];
    if (!f.domain.contains(z.head(n), slack) || !f.domain.contains(z.tail(n), slack)) {
      throw Error(Errc::DomainExit, "decay_audit: trajectories left the domain");
    }
    const Vector d = z.head(n) - z.tail(n);
    const double t = tr.times[j];
    r.times.push_back(t);
    r.g.push_back(std::exp(2.0 * lambda * t) * c.quad_form(d));
    const double m = d.squaredNorm() > 0.0 ? c.margin(d) : 0.0;
    r.margin.push_back(m);
    if (j > 0 && r.initially_ordered &&
        (d.squaredNorm() == 0.0 || classify_margin(m, c.band()) != Relation::StronglyOrdered)) {
      r.strongly_ordered_after = false;
    }
  }
  r.decreasing = true;
  for (std::size_t j = 0; j + 1 < r.g.size(); ++j) {
    if (!(r.g[j + 1] <= r.g[j] - slack_rtol * std::abs(r.g[j]))) {
      r.decreasing = false;
      r.first_violation = static_cast<std::ptrdiff_t>(j);
      break;
    }
  }
  const bool ok = r.decreasing && (!r.initially_ordered || r.strongly_ordered_after);
  r.verdict = ok ? Verdict::Pass : Verdict::Fail;
  return r;
}

}  // namespace kcone
