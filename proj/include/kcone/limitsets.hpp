#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kcone/cones.hpp"
#include "kcone/equilibria.hpp"
#include "kcone/integrate.hpp"
#include "kcone/parallel.hpp"

namespace kcone {

namespace detail {

inline double point_segment_distance(const double* p, const double* a, const double* b,
                                     Eigen::Index n) {
  double ab2 = 0.0, apab = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ab = b[i] - a[i];
    ab2 += ab * ab;
    apab += (p[i] - a[i]) * ab;
  }
  const double u = ab2 > 0.0 ? std::clamp(apab / ab2, 0.0, 1.0) : 0.0;
  double d2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = p[i] - (a[i] + u * (b[i] - a[i]));
    d2 += e * e;
  }
  return std::sqrt(d2);
}

/// max over points of `from` of the distance to the polyline through `to`.
inline double directed_polyline_gap(const std::vector<Vector>& from, const std::vector<Vector>& to) {
  double worst = 0.0;
  for (const Vector& p : from) {
    double best = std::numeric_limits<double>::infinity();
    if (to.size() == 1) {
      best = (p - to[0]).norm();
    } else {
      for (std::size_t j = 0; j + 1 < to.size(); ++j) {
        best = std::min(best, point_segment_distance(p.data(), to[j].data(), to[j + 1].data(), p.size()));
        if (best == 0.0) break;
      }
    }
    worst = std::max(worst, best);
  }
  return worst;
}

inline bool distinct_states(const Vector& a, const Vector& b, double rel = 1e-12) {
  return (a - b).norm() > rel * std::max({1.0, a.norm(), b.norm()});
}

/// Golden-section minimum of a unimodal f on [a, b].
template <class F>
std::pair<double, double> golden_min(F&& f, double a, double b, double tol) {
  constexpr double g = 0.61803398874989484820;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && (b - a) > tol; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return fc < fd ? std::pair{c, fc} : std::pair{d, fd};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// omega-limit estimate

struct OmegaOptions {
  double window_fraction = 0.5;
  double spacing = 0.02;
  double tol = 0.0;  // 0 selects 1e-4 * reference diameter
};

/// Finite stand-in for omega(x): the trajectory tail sampled every `spacing`
/// over the last window, with a Hausdorff self-consistency check between the
/// two halves of the window.
struct OmegaEstimate {
  std::vector<double> times;
  std::vector<Vector> points;
  double window_start = 0.0;
  double window_end = 0.0;
  double hausdorff_gap = 0.0;
  double tol = 0.0;
  bool converged = false;

  std::size_t size() const { return points.size(); }
};

inline OmegaEstimate estimate_omega(const Trajectory& traj, const OmegaOptions& opt = {},
                                    double reference_diameter = 1.0) {
  if (!(opt.window_fraction > 0.0) || opt.window_fraction > 1.0 || !(opt.spacing > 0.0)) {
    throw Error(Errc::InvalidParameter, "estimate_omega: need 0 < window_fraction <= 1 and spacing > 0");
  }
  if (traj.direction != 1) throw Error(Errc::InvalidParameter, "estimate_omega: forward trajectory required");
  const double window = opt.window_fraction * traj.requested_duration;
  if (traj.size() < 2 || traj.duration() < 2.0 * window * (1.0 - 1e-12)) {
    throw Error(Errc::TrajectoryTooShort, "estimate_omega: trajectory shorter than twice the window");
  }
  if (window < 2.0 * opt.spacing) {
    throw Error(Errc::TrajectoryTooShort, "estimate_omega: window holds fewer than 3 samples");
  }
  OmegaEstimate om;
  om.window_end = traj.end_time();
  om.window_start = om.window_end - window;
  const auto count = static_cast<std::size_t>(std::floor(window / opt.spacing + 1e-9));
  for (std::size_t j = 0; j <= count; ++j) {
    const double t = om.window_end - static_cast<double>(count - j) * opt.spacing;
    om.times.push_back(t);
    om.points.push_back(traj.state_at(t));
  }
  const std::size_t half = om.points.size() / 2;
  const std::vector<Vector> first(om.points.begin(), om.points.begin() + static_cast<std::ptrdiff_t>(half));
  const std::vector<Vector> second(om.points.begin() + static_cast<std::ptrdiff_t>(half), om.points.end());
  om.hausdorff_gap = std::max(detail::directed_polyline_gap(first, second),
                              detail::directed_polyline_gap(second, first));
  om.tol = opt.tol > 0.0 ? opt.tol : 1e-4 * reference_diameter;
  om.converged = om.hausdorff_gap <= om.tol;
  return om;
}

// ---------------------------------------------------------------------------
// orbit classification

enum class OrbitType { Trivial, TypeI, TypeII };

constexpr const char* orbit_type_name(OrbitType t) {
  switch (t) {
    case OrbitType::Trivial: return "Trivial";
    case OrbitType::TypeI: return "TypeI_PseudoOrdered";
    case OrbitType::TypeII: return "TypeII_Unordered";
  }
  return "?";
}

struct OrbitClass {
  OrbitType type = OrbitType::Trivial;
  std::optional<std::pair<double, double>> witness;  // (t1, t2), TypeI only
  double witness_margin = 0.0;
  std::size_t pairs_checked = 0;
  std::size_t samples = 0;
};

/// Samples `n_samples` states uniformly in time and scans pairs t1 < t2 for
/// one that is not unordered (boundary-band ties count as ordered).
template <Cone C>
OrbitClass classify_orbit(const Trajectory& traj, const C& cone, std::size_t n_samples = 400) {
  if (n_samples < 10) throw Error(Errc::InvalidParameter, "classify_orbit: need >= 10 samples");
  OrbitClass out;
  out.samples = n_samples;
  const double t0 = traj.start_time(), t1 = traj.end_time();
  std::vector<double> ts(n_samples);
  std::vector<Vector> xs(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    ts[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n_samples - 1);
    xs[i] = traj.state_at(ts[i]);
  }
  bool any_distinct = false;
  for (std::size_t i = 0; i < n_samples; ++i) {
    for (std::size_t j = i + 1; j < n_samples; ++j) {
      if (!detail::distinct_states(xs[i], xs[j])) continue;
      any_distinct = true;
      ++out.pairs_checked;
      const OrderRelation rel = relate(cone, xs[i], xs[j]);
      if (rel.ordered()) {
        out.type = OrbitType::TypeI;
        out.witness = std::pair{ts[i], ts[j]};
        out.witness_margin = rel.margin;
        return out;
      }
    }
  }
  out.type = any_distinct ? OrbitType::TypeII : OrbitType::Trivial;
  return out;
}

// ---------------------------------------------------------------------------
// ordering audit

struct OrderingAudit {
  std::size_t pairs = 0;
  std::size_t ordered_pairs = 0;
  double ordered_fraction = 0.0;
  double min_margin = std::numeric_limits<double>::infinity();
  double max_margin = -std::numeric_limits<double>::infinity();
  std::optional<std::pair<std::size_t, std::size_t>> worst_unordered;  // point indices
  bool ordered = false;
};

/// relate() over all distinct pairs of `points`.
template <Cone C>
OrderingAudit audit_ordering(const std::vector<Vector>& points, const C& cone) {
  struct Row {
    std::size_t pairs = 0, ordered = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t hi_j = 0;
  };
  const std::size_t m = points.size();
  std::vector<Row> rows(m);
  parallel_for(m, [&](std::size_t i) {
    Row& r = rows[i];
    Vector d(points[i].size());
    for (std::size_t j = i + 1; j < m; ++j) {
      if (!detail::distinct_states(points[i], points[j])) continue;
      d = points[i] - points[j];
      const double mg = cone.margin(d);
      ++r.pairs;
      if (classify_margin(mg, cone.band()) != Relation::Unordered) ++r.ordered;
      r.lo = std::min(r.lo, mg);
      if (mg > r.hi) {
        r.hi = mg;
        r.hi_j = j;
      }
    }
  });
  OrderingAudit a;
  std::pair<std::size_t, std::size_t> top{0, 0};
  for (std::size_t i = 0; i < m; ++i) {
    const Row& r = rows[i];
    if (r.pairs == 0) continue;
    a.pairs += r.pairs;
    a.ordered_pairs += r.ordered;
    a.min_margin = std::min(a.min_margin, r.lo);
    if (r.hi > a.max_margin) {
      a.max_margin = r.hi;
      top = {i, r.hi_j};
    }
  }
  if (a.pairs == 0) {
    throw Error(Errc::TooFewPoints, "audit_ordering: fewer than two distinct points");
  }
  a.ordered_fraction = static_cast<double>(a.ordered_pairs) / static_cast<double>(a.pairs);
  a.ordered = a.ordered_pairs == a.pairs;
  if (!a.ordered) a.worst_unordered = top;
  return a;
}

/// Histogram of pairwise margins over distinct pairs, `bins` equal bins
/// spanning [min, max].
struct MarginHistogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;
};

template <Cone C>
MarginHistogram margin_histogram(const std::vector<Vector>& points, const C& cone, std::size_t bins = 50) {
  MarginHistogram h;
  std::vector<double> ms;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      if (detail::distinct_states(points[i], points[j])) ms.push_back(cone.margin(points[i] - points[j]));
  if (ms.empty() || bins == 0) return h;
  const auto [lo_it, hi_it] = std::minmax_element(ms.begin(), ms.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) bins = 1;  // all margins equal: one degenerate bin
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b)
    h.edges[b] = b == bins ? hi : lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (double v : ms) {
    std::size_t b = hi > lo ? static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins)) : 0;
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

/// min over distinct pairs of ||Theta p - Theta q|| / ||p - q||.
inline double projection_separation(const std::vector<Vector>& points, const Projector& proj) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<Vector> u;
  u.reserve(points.size());
  for (const Vector& p : points) u.push_back(proj.apply(p));
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      if (detail::distinct_states(points[i], points[j]))
        best = std::min(best, (u[i] - u[j]).norm() / (points[i] - points[j]).norm());
  return best;
}

// ---------------------------------------------------------------------------
// trichotomy

enum class Branch { Ordered, UnorderedEquilibria, OrderedHomoclinicSuspected, Undetermined };

constexpr const char* branch_name(Branch b) {
  switch (b) {
    case Branch::Ordered: return "Ordered";
    case Branch::UnorderedEquilibria: return "UnorderedEquilibria";
    case Branch::OrderedHomoclinicSuspected: return "OrderedHomoclinicSuspected";
    case Branch::Undetermined: return "Undetermined";
  }
  return "?";
}

struct TrichotomyOptions {
  double dist_eq = 1e-6;
  const VectorField* field = nullptr;  // needed for the homoclinic check
  double alpha_horizon = 50.0;         // backward integration time for alpha-limit surrogates
  double alpha_tol = 1e-3;
  std::size_t alpha_probes = 8;
  IntegratorOptions integrator{};
};

struct TrichotomyReport {
  Branch branch = Branch::Undetermined;
  double ordered_fraction = 0.0;
  std::vector<std::size_t> equilibria_hits;  // indices into the supplied equilibria
  std::vector<std::size_t> ordered_core;     // indices into omega points
  bool converged = true;
  bool trivially_ordered = false;  // omega collapsed to a single point
  bool uses_backward_surrogate = false;
  double dist_eq = 0.0;
  std::optional<OrderingAudit> audit;
};

template <Cone C>
TrichotomyReport trichotomy_report(const OmegaEstimate& omega, const std::vector<Vector>& equilibria,
                                   const C& cone, const TrichotomyOptions& opt = {}) {
  TrichotomyReport r;
  r.converged = omega.converged;
  r.dist_eq = opt.dist_eq;

  auto near_eq = [&](const Vector& p) -> std::optional<std::size_t> {
    for (std::size_t e = 0; e < equilibria.size(); ++e)
      if ((p - equilibria[e]).norm() <= opt.dist_eq) return e;
    return std::nullopt;
  };
  bool all_near = !omega.points.empty();
  std::vector<bool> hit(equilibria.size(), false);
  for (const Vector& p : omega.points) {
    if (auto e = near_eq(p)) hit[*e] = true;
    else all_near = false;
  }
  for (std::size_t e = 0; e < equilibria.size(); ++e)
    if (hit[e]) r.equilibria_hits.push_back(e);

  try {
    r.audit = audit_ordering(omega.points, cone);
  } catch (const Error& e) {
    if (e.code() != Errc::TooFewPoints) throw;
    r.trivially_ordered = true;
    r.ordered_fraction = 1.0;
    r.branch = all_near ? Branch::UnorderedEquilibria : Branch::Ordered;
    return r;
  }
  r.ordered_fraction = r.audit->ordered_fraction;
  if (r.audit->ordered) {
    r.branch = Branch::Ordered;
    return r;
  }
  if (r.audit->ordered_pairs == 0 && all_near) {
    r.branch = Branch::UnorderedEquilibria;
    return r;
  }
  if (r.audit->ordered_pairs == 0 || opt.field == nullptr) {
    r.branch = Branch::Undetermined;
    return r;
  }

  // Mixed audit: greedy ordered core, then backward probes of the remainder.
  const std::size_t m = omega.points.size();
  std::vector<std::size_t> partners(m, 0);
  std::vector<std::vector<bool>> ok(m, std::vector<bool>(m, true));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      bool ordered = true;
      if (detail::distinct_states(omega.points[i], omega.points[j]))
        ordered = classify_margin(cone.margin(omega.points[i] - omega.points[j]), cone.band()) !=
                  Relation::Unordered;
      ok[i][j] = ok[j][i] = ordered;
      if (ordered) {
        ++partners[i];
        ++partners[j];
      }
    }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return partners[a] > partners[b]; });
  std::vector<bool> in_core(m, false);
  for (std::size_t i : order) {
    bool fits = true;
    for (std::size_t c : r.ordered_core)
      if (!ok[i][c]) {
        fits = false;
        break;
      }
    if (fits) {
      r.ordered_core.push_back(i);
      in_core[i] = true;
    }
  }
  std::sort(r.ordered_core.begin(), r.ordered_core.end());

  std::vector<Vector> core_eq;
  for (const Vector& e : equilibria)
    for (std::size_t c : r.ordered_core)
      if ((omega.points[c] - e).norm() <= opt.dist_eq) {
        core_eq.push_back(e);
        break;
      }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < m; ++i)
    if (!in_core[i]) rest.push_back(i);
  r.uses_backward_surrogate = true;
  if (core_eq.empty() || rest.empty()) {
    r.branch = Branch::Undetermined;
    return r;
  }
  const std::size_t probes = std::min(opt.alpha_probes, rest.size());
  for (std::size_t k = 0; k < probes; ++k) {
    const std::size_t idx = rest[k * rest.size() / probes];
    Trajectory back;
    try {
      back = integrate_backward(*opt.field, omega.points[idx], opt.alpha_horizon, opt.integrator);
    } catch (const Error&) {
      r.branch = Branch::Undetermined;
      return r;
    }
    if (back.exited_domain()) {
      r.branch = Branch::Undetermined;
      return r;
    }
    bool approaches = false;
    for (const Vector& e : core_eq)
      if ((back.final_state() - e).norm() <= opt.alpha_tol) approaches = true;
    if (!approaches) {
      r.branch = Branch::Undetermined;
      return r;
    }
  }
  r.branch = Branch::OrderedHomoclinicSuspected;
  return r;
}

// ---------------------------------------------------------------------------
// periodic orbit detection (rank-2 quadratic cones)

struct PeriodicOptions {
  double tol_per = 1e-2;
  std::size_t loop_points = 256;
  std::size_t representative = std::numeric_limits<std::size_t>::max();  // omega index; default last
  IntegratorOptions integrator{};
};

struct PeriodicOrbit {
  double period = 0.0;
  Vector representative;
  std::vector<double> loop_times;  // relative to the representative
  std::vector<Vector> loop;        // one period of states
  double closure_gap = 0.0;        // ||Phi_T(p) - p||
  double loop_diameter = 0.0;
};

/// Projects the omega sample by Theta, walks back in time from the
/// representative p until the projected curve has left and then re-entered
/// the disk of radius tol_per * diam(Theta omega) around Theta p with the
/// same orientation, and refines the return time by golden section on
/// ||Phi_t(p) - p||. Returns nullopt when no closing return is found.
inline std::optional<PeriodicOrbit> detect_periodic(const OmegaEstimate& omega, const VectorField& field,
                                                    const QuadraticCone& cone,
                                                    const PeriodicOptions& opt = {}) {
  if (cone.rank() != 2) throw Error(Errc::RankNotTwo, "detect_periodic: cone rank must be 2");
  if (!omega.converged) throw Error(Errc::NotConverged, "detect_periodic: omega estimate not converged");
  const std::size_t m = omega.points.size();
  if (m < 3) return std::nullopt;
  const Projector proj = make_projector(cone);
  std::vector<Vector> u;
  u.reserve(m);
  for (const Vector& p : omega.points) u.push_back(proj.coords(p));
  Vector lo = u[0], hi = u[0];
  for (const Vector& v : u) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double diam = (hi - lo).norm();
  if (!(diam > 0.0)) return std::nullopt;
  const double radius = opt.tol_per * diam;

  const std::size_t q = std::min(opt.representative, m - 1);
  const Vector& p = omega.points[q];
  const Vector& up = u[q];
  const Vector vp = proj.coords(field(p));

  std::optional<double> tau0;
  bool left = false;
  for (std::size_t j = q; j-- > 0;) {
    const double dj = detail::point_segment_distance(up.data(), u[j].data(), u[j + 1].data(), up.size());
    if (!left) {
      if (dj > radius) left = true;
      continue;
    }
    if (dj > radius) continue;
    // Descend to the local minimum of the segment distance.
    std::size_t best = j;
    double dbest = dj;
    while (best > 0) {
      const double dn = detail::point_segment_distance(up.data(), u[best - 1].data(), u[best].data(), up.size());
      if (dn >= dbest) break;
      dbest = dn;
      --best;
    }
    const Vector vj = proj.coords(field(omega.points[best]));
    if (vj.dot(vp) > 0.0) {
      tau0 = omega.times[q] - omega.times[best];
      break;
    }
    j = best;
    left = false;
  }
  if (!tau0) return std::nullopt;

  const double spacing = omega.times[1] - omega.times[0];
  const double a = std::max(0.5 * *tau0, *tau0 - 3.0 * spacing);
  const double b = *tau0 + 3.0 * spacing;
  Vector base;
  try {
    base = flow(field, p, a, opt.integrator);
  } catch (const Error&) {
    return std::nullopt;
  }
  auto gap = [&](double t) {
    try {
      return (flow(field, base, t - a, opt.integrator) - p).norm();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const auto [t_star, g_star] = detail::golden_min(gap, a, b, 1e-12 * std::max(1.0, b));

  PeriodicOrbit orbit;
  orbit.period = t_star;
  orbit.representative = p;
  orbit.closure_gap = g_star;
  const Trajectory one = integrate(field, p, t_star, opt.integrator);
  const std::size_t n_loop = std::max<std::size_t>(opt.loop_points, 3);
  for (std::size_t k = 0; k < n_loop; ++k) {
    const double t = t_star * static_cast<double>(k) / static_cast<double>(n_loop);
    orbit.loop_times.push_back(t);
    orbit.loop.push_back(one.state_at(t));
  }
  for (std::size_t i = 0; i < n_loop; ++i)
    for (std::size_t j = i + 1; j < n_loop; ++j)
      orbit.loop_diameter = std::max(orbit.loop_diameter, (orbit.loop[i] - orbit.loop[j]).norm());
  if (!(orbit.closure_gap <= opt.tol_per * orbit.loop_diameter)) return std::nullopt;
  return orbit;
}

// ---------------------------------------------------------------------------
// (eps, r)-chains

struct ChainOptions {
  double horizon = 0.0;  // longest hop; 0 selects 10 r
  std::size_t grid = 4000;
  IntegratorOptions integrator{};
};

struct ChainResult {
  bool success = false;
  std::vector<std::size_t> nodes;  // y_1 = start, ..., y_{n+1} = start
  std::vector<double> hops;        // t_i >= r
  std::vector<double> jumps;       // ||Phi_{t_i}(y_i) - y_{i+1}||
};

namespace detail {

struct Hop {
  std::size_t to;
  double time;
  double jump;
};

/// Hops of duration in [r, horizon] from `from` landing within eps of any node.
inline std::vector<Hop> find_hops(const std::vector<Vector>& nodes, std::size_t from, const VectorField& field,
                                  double eps, double r, double horizon, const ChainOptions& opt,
                                  std::optional<std::size_t> only_target) {
  std::vector<Hop> hops;
  Trajectory tr;
  try {
    tr = integrate(field, nodes[from], horizon, opt.integrator);
  } catch (const Error&) {
    return hops;
  }
  const double t_end = tr.end_time();
  if (t_end < r) return hops;
  const std::size_t g = std::max<std::size_t>(opt.grid, 16);
  const double dt = (t_end - r) / static_cast<double>(g);
  std::vector<Vector> xs;
  xs.reserve(g + 1);
  double vmax = 0.0;
  for (std::size_t k = 0; k <= g; ++k) {
    xs.push_back(tr.state_at(r + static_cast<double>(k) * dt));
  }
  for (std::size_t k = 0; k < g; ++k) vmax = std::max(vmax, (xs[k + 1] - xs[k]).norm());
  const double coarse = eps + vmax;

  for (std::size_t target = 0; target < nodes.size(); ++target) {
    if (only_target && target != *only_target) continue;
    const Vector& y = nodes[target];
    std::vector<double> d(g + 1);
    for (std::size_t k = 0; k <= g; ++k) d[k] = (xs[k] - y).norm();
    for (std::size_t k = 0; k <= g; ++k) {
      const bool local_min = (k == 0 || d[k] <= d[k - 1]) && (k == g || d[k] <= d[k + 1]);
      if (!local_min || d[k] > coarse) continue;
      const double a = r + static_cast<double>(k == 0 ? 0 : k - 1) * dt;
      const double b = r + static_cast<double>(std::min(k + 1, g)) * dt;
      Vector base;
      try {
        base = flow(field, nodes[from], a, opt.integrator);
      } catch (const Error&) {
        continue;
      }
      auto dist = [&](double t) {
        try {
          return (flow(field, base, t - a, opt.integrator) - y).norm();
        } catch (const Error&) {
          return std::numeric_limits<double>::infinity();
        }
      };
      auto [t_star, d_star] = golden_min(dist, a, b, 1e-13 * std::max(1.0, b));
      const double d_a = dist(a);
      if (d_a <= d_star) {
        t_star = a;
        d_star = d_a;
      }
      if (d_star < eps && t_star >= r) {
        hops.push_back({target, t_star, d_star});
        break;
      }
    }
  }
  return hops;
}

}  // namespace detail

/// For each point, searches for an (eps, r)-chain back to itself through the
/// given points, hops being integrated orbit segments of duration >= r.
inline std::vector<ChainResult> chain_check(const std::vector<Vector>& points, const VectorField& field,
                                            double eps, double r, const ChainOptions& opt = {}) {
  if (!(eps > 0.0) || !(r > 0.0)) throw Error(Errc::InvalidParameter, "chain_check: need eps > 0 and r > 0");
  const double horizon = opt.horizon > r ? opt.horizon : 10.0 * r;
  const std::size_t m = points.size();
  std::vector<ChainResult> out(m);
  std::vector<std::optional<detail::Hop>> self(m);
  parallel_for(m, [&](std::size_t i) {
    auto hops = detail::find_hops(points, i, field, eps, r, horizon, opt, i);
    if (!hops.empty()) self[i] = hops.front();
  });

  std::vector<std::vector<detail::Hop>> graph;
  bool graph_built = false;
  for (std::size_t i = 0; i < m; ++i) {
    if (self[i]) {
      out[i] = {true, {i, i}, {self[i]->time}, {self[i]->jump}};
      continue;
    }
    if (!graph_built) {
      graph.resize(m);
      parallel_for(m, [&](std::size_t k) {
        graph[k] = detail::find_hops(points, k, field, eps, r, horizon, opt, std::nullopt);
      });
      graph_built = true;
    }
    // BFS for the shortest cycle through i.
    std::vector<std::ptrdiff_t> parent(m, -1);
    std::vector<const detail::Hop*> via(m, nullptr);
    std::vector<bool> seen(m, false);
    std::deque<std::size_t> queue;
    queue.push_back(i);
    seen[i] = true;
    const detail::Hop* closing = nullptr;
    std::size_t closing_from = 0;
    while (!queue.empty() && !closing) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (const auto& hop : graph[u]) {
        if (hop.to == i) {
          closing = &hop;
          closing_from = u;
          break;
        }
        if (!seen[hop.to]) {
          seen[hop.to] = true;
          parent[hop.to] = static_cast<std::ptrdiff_t>(u);
          via[hop.to] = &hop;
          queue.push_back(hop.to);
        }
      }
    }
    if (!closing) continue;
    std::vector<std::size_t> path{i};
    std::vector<double> times{closing->time}, jumps{closing->jump};
    for (std::size_t v = closing_from; v != i; v = static_cast<std::size_t>(parent[v])) {
      path.push_back(v);
      times.push_back(via[v]->time);
      jumps.push_back(via[v]->jump);
    }
    path.push_back(i);
    std::reverse(path.begin(), path.end());
    std::reverse(times.begin(), times.end());
    std::reverse(jumps.begin(), jumps.end());
    out[i] = {true, std::move(path), std::move(times), std::move(jumps)};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gamma diagnostics

struct GammaResult {
  double value = 0.0;
  bool truncated = false;      // reached t_max: numerical stand-in for +infinity
  bool backward_exit = false;  // backward orbit left the domain; value is what was attained
  std::vector<double> h_times;
  std::vector<double> h_values;  // gamma_star_ordered only
  bool h_nondecreasing = true;
};

namespace detail {

inline void validate_gamma(double t_max, double dt) {
  if (!(t_max > 0.0) || !(dt > 0.0) || dt > t_max) {
    throw Error(Errc::InvalidParameter, "gamma: need t_max > 0 and 0 < dt <= t_max");
  }
}

template <Cone C>
bool is_ordered_or_equal(const C& cone, const Vector& a, const Vector& b) {
  if (!distinguishable(a, b)) return true;
  return relate(cone, a, b).ordered();
}

/// Largest grid t with pred(Phi_s(moving), fixed) for all grid s in [-t, t].
template <class Pred>
GammaResult gamma_scan(const VectorField& field, const Vector& moving, const Vector& fixed, double t_max,
                       double dt, const IntegratorOptions& io, Pred&& pred) {
  GammaResult g;
  Trajectory fwd = integrate(field, moving, t_max, io);
  Trajectory bwd = integrate_backward(field, moving, t_max, io);
  g.backward_exit = bwd.exited_domain();
  const double fwd_cover = fwd.end_time();
  const double bwd_cover = -bwd.end_time();
  const auto steps = static_cast<std::size_t>(std::floor(t_max / dt + 1e-9));
  for (std::size_t j = 1; j <= steps; ++j) {
    const double s = static_cast<double>(j) * dt;
    if (s > fwd_cover * (1.0 + 1e-12) || s > bwd_cover * (1.0 + 1e-12)) {
      g.value = static_cast<double>(j - 1) * dt;
      return g;
    }
    if (!pred(fwd.state_at(s), fixed) || !pred(bwd.state_at(-s), fixed)) {
      g.value = static_cast<double>(j - 1) * dt;
      return g;
    }
  }
  g.value = t_max;
  g.truncated = true;
  return g;
}

}  // namespace detail

/// Gamma(c1, c2) = sup{t : Phi_s(c1) unordered with c2 for all s in [-t, t]},
/// on the grid s = k dt, truncated at t_max.
template <Cone C>
GammaResult gamma_unordered(const VectorField& field, const Vector& c1, const Vector& c2, const C& cone,
                            double t_max, double dt, const IntegratorOptions& io = {}) {
  detail::validate_gamma(t_max, dt);
  if (detail::is_ordered_or_equal(cone, c1, c2)) {
    throw Error(Errc::PreconditionOrdered, "gamma_unordered: c1 and c2 are ordered");
  }
  return detail::gamma_scan(field, c1, c2, t_max, dt, io, [&](const Vector& a, const Vector& b) {
    return !detail::is_ordered_or_equal(cone, a, b);
  });
}

/// Gamma*(z1, z2) = sup{t : z1 ordered with Phi_s(z2) for all s in [-t, t]},
/// plus the series h(t_k) = Gamma*(Phi_{t_k} z1, Phi_{t_k} z2), t_k = k h_step.
template <Cone C>
GammaResult gamma_star_ordered(const VectorField& field, const Vector& z1, const Vector& z2, const C& cone,
                               double t_max, double dt, const IntegratorOptions& io = {},
                               std::size_t h_points = 0, double h_step = 0.0) {
  detail::validate_gamma(t_max, dt);
  if (!detail::is_ordered_or_equal(cone, z1, z2)) {
    throw Error(Errc::PreconditionUnordered, "gamma_star_ordered: z1 and z2 are unordered");
  }
  auto pred = [&](const Vector& moved, const Vector& fixed) {
    return detail::is_ordered_or_equal(cone, fixed, moved);
  };
  GammaResult g = detail::gamma_scan(field, z2, z1, t_max, dt, io, pred);
  if (h_points > 0) {
    if (!(h_step > 0.0)) throw Error(Errc::InvalidParameter, "gamma_star_ordered: h_step must be > 0");
    Vector a = z1, b = z2;
    for (std::size_t k = 0; k < h_points; ++k) {
      if (k > 0) {
        a = flow(field, a, h_step, io);
        b = flow(field, b, h_step, io);
      }
      g.h_times.push_back(static_cast<double>(k) * h_step);
      double v = std::numeric_limits<double>::quiet_NaN();
      if (detail::is_ordered_or_equal(cone, a, b))
        v = detail::gamma_scan(field, b, a, t_max, dt, io, pred).value;
      g.h_values.push_back(v);
    }
    for (std::size_t k = 1; k < g.h_values.size(); ++k)
      if (!(g.h_values[k] >= g.h_values[k - 1])) g.h_nondecreasing = false;
  }
  return g;
}

}  // namespace kcone
