#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <optional>
#include <string>
#include <vector>

#include "kcone/certify.hpp"
#include "kcone/equilibria.hpp"
#include "kcone/limitsets.hpp"
#include "kcone/parallel.hpp"
#include "kcone/scenario.hpp"

#ifndef KCONE_VERSION
#define KCONE_VERSION "0.1.0"
#endif

namespace kcone {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitSchema = 2, kExitIntegration = 3, kExitIncomplete = 4 };

/// Command-line overrides layered over the scenario.
struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> pairs;
  std::optional<LambdaGrid> lambda_grid;
};

inline void apply_overrides(Scenario& s, const RunOverrides& o) {
  if (o.seed) s.seed = *o.seed;
  if (o.pairs) s.pairs = *o.pairs;
  if (o.lambda_grid) s.lambda_grid = *o.lambda_grid;
}

namespace detail {

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json num(double d) { return std::isfinite(d) ? Json(d) : Json(nullptr); }

inline std::string fmt17(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

inline Json certificate_json(const CertificateReport& r) {
  Json j;
  j["condition"] = condition_name(r.condition);
  j["lambda"] = num(r.lambda);
  if (r.condition == Condition::SmithEpsilon) j["epsilon"] = num(r.epsilon);
  j["epsilon_star"] = num(r.epsilon_star);
  j["worst_margin"] = num(r.worst_margin);
  j["worst_pair"] = Json::array({r.worst_x.size() ? to_json(r.worst_x) : Json(nullptr),
                                 r.worst_y.size() ? to_json(r.worst_y) : Json(nullptr)});
  j["n_samples"] = r.n_samples;
  j["n_skipped"] = r.n_skipped;
  j["band"] = r.band;
  j["seed"] = r.seed;
  if (r.condition == Condition::CyclicFeedback)
    j["feedback_type"] = r.feedback_sign > 0 ? "positive" : "negative";
  j["verdict"] = verdict_name(r.verdict);
  return j;
}

inline std::size_t seeds_per_axis(int n) {
  std::size_t k = 2;
  while (std::pow(static_cast<double>(k + 1), n) <= 1000.0) ++k;
  return std::min<std::size_t>(k, 5);
}

}  // namespace detail

/// Certificate section. The checks that run depend on the field family and cone.
inline Json run_certify(const Scenario& s, const VectorField& f, const AnyCone& cone) {
  Json out;
  Json certs = Json::array();
  const QuadraticCone* q = cone.quadratic();
  const bool cyclic = f.family == FieldFamily::CyclicFeedback && !f.deltas.empty();
  if (!s.lambda && !s.lambda_grid && !cyclic) detail::schema_fail("/lambda", "required property missing");

  if (cyclic) certs.push_back(detail::certificate_json(check_cyclic_feedback(f, f.deltas, f.domain, s.pairs, s.seed)));
  if (s.lambda && q) {
    if (f.linear_matrix) certs.push_back(detail::certificate_json(certify_linear(*f.linear_matrix, *q, *s.lambda)));
    certs.push_back(detail::certificate_json(certify_sampled(f, *q, *s.lambda, f.domain, s.pairs, s.seed)));
    if (s.epsilon)
      certs.push_back(detail::certificate_json(certify_smith(f, *q, *s.lambda, *s.epsilon, f.domain, s.pairs, s.seed)));
  }
  out["certificates"] = certs;
  if (s.lambda_grid && q) {
    const LambdaScan scan = scan_lambda(f, *q, s.lambda_grid->min, s.lambda_grid->max, s.lambda_grid->step,
                                        f.domain, s.pairs, s.seed);
    Json grid = Json::array(), worst = Json::array();
    for (const auto& r : scan.reports) {
      grid.push_back(r.lambda);
      worst.push_back(detail::num(r.worst_margin));
    }
    out["lambda_scan"] = {{"min", s.lambda_grid->min}, {"max", s.lambda_grid->max}, {"step", s.lambda_grid->step},
                          {"lambda", grid},          {"worst_margin", worst},     {"passing", scan.passing}};
  }
  if (!q && !cyclic) out["note"] = "sampled certificates need a quadratic cone";
  return out;
}

/// Data kept per orbit for the CSV sidecars.
struct OrbitArtifacts {
  Trajectory trajectory;
  std::vector<Vector> omega_points;
  std::optional<PeriodicOrbit> periodic;
  MarginHistogram margins;
};

struct OrbitOutcome {
  Json section;
  OrbitArtifacts artifacts;
  int exit_code = kExitOk;
};

inline OrbitOutcome analyze_orbit(const Scenario& s, const VectorField& f, const AnyCone& cone,
                                  const std::vector<Vector>& equilibria, std::size_t index) {
  OrbitOutcome oc;
  Json& j = oc.section;
  const AnalysisParams& ap = s.analysis;
  const Vector& x0 = s.x0[index];
  j["index"] = index;
  j["x0"] = detail::to_json(x0);
  Json issues = Json::array();

  Trajectory tr;
  try {
    tr = integrate(f, x0, s.T, s.integrator);
  } catch (const Error& e) {
    j["integration"] = {{"T", s.T}, {"rtol", s.integrator.rtol}, {"atol", s.integrator.atol}, {"error", e.what()}};
    j["status"] = "integration_failure";
    oc.exit_code = kExitIntegration;
    return oc;
  }
  oc.artifacts.trajectory = tr;
  j["integration"] = {{"T", s.T},
                      {"rtol", s.integrator.rtol},
                      {"atol", s.integrator.atol},
                      {"steps", tr.size() - 1},
                      {"end_time", tr.end_time()},
                      {"exited_domain", tr.exited_domain()}};
  if (tr.exited_domain()) issues.push_back("trajectory left the domain");

  const OrbitClass oclass = classify_orbit(tr, cone, ap.classify_samples);
  j["orbit_class"] = {{"type", orbit_type_name(oclass.type)},
                      {"witness_times", oclass.witness ? Json::array({oclass.witness->first, oclass.witness->second})
                                                 : Json(nullptr)},
                      {"witness_margin", oclass.witness ? Json(oclass.witness_margin) : Json(nullptr)},
                      {"pairs_checked", oclass.pairs_checked},
                      {"samples", oclass.samples},
                      {"band", cone.band()}};

  OmegaEstimate om;
  try {
    OmegaOptions oo;
    oo.window_fraction = ap.window_fraction;
    oo.spacing = ap.spacing;
    oo.tol = ap.omega_tol;
    om = estimate_omega(tr, oo, f.domain.diameter());
  } catch (const Error& e) {
    issues.push_back(e.what());
    j["omega"] = nullptr;
    j["issues"] = issues;
    j["status"] = "incomplete";
    oc.exit_code = kExitIncomplete;
    return oc;
  }
  j["omega"] = {{"points", om.size()},       {"window", Json::array({om.window_start, om.window_end})},
                {"spacing", ap.spacing},      {"hausdorff_gap", om.hausdorff_gap},
                {"tol", om.tol},              {"converged", om.converged}};
  if (!om.converged) issues.push_back("omega estimate not converged");
  oc.artifacts.omega_points = om.points;

  TrichotomyOptions to;
  to.dist_eq = ap.dist_eq;
  to.field = &f;
  to.integrator = s.integrator;
  const TrichotomyReport tri = trichotomy_report(om, equilibria, cone, to);
  if (tri.audit) {
    const OrderingAudit& a = *tri.audit;
    j["audit"] = {{"pairs", a.pairs},
                  {"ordered_pairs", a.ordered_pairs},
                  {"ordered_fraction", a.ordered_fraction},
                  {"min_margin", detail::num(a.min_margin)},
                  {"max_margin", detail::num(a.max_margin)},
                  {"worst_unordered", a.worst_unordered
                                          ? Json::array({a.worst_unordered->first, a.worst_unordered->second})
                                          : Json(nullptr)},
                  {"band", cone.band()},
                  {"verdict", a.ordered ? "Ordered" : "NotOrdered"}};
  } else {
    j["audit"] = {{"pairs", 0}, {"verdict", "TriviallyOrdered"}, {"band", cone.band()}};
  }
  Json hits = Json::array();
  for (std::size_t e : tri.equilibria_hits) hits.push_back(detail::to_json(equilibria[e]));
  j["trichotomy"] = {{"branch", branch_name(tri.branch)},
                     {"ordered_fraction", tri.ordered_fraction},
                     {"equilibria_hits", hits},
                     {"ordered_core_size", tri.ordered_core.size()},
                     {"dist_eq", tri.dist_eq},
                     {"converged", tri.converged},
                     {"trivially_ordered", tri.trivially_ordered},
                     {"uses_backward_surrogate", tri.uses_backward_surrogate}};
  if (tri.branch == Branch::Undetermined) issues.push_back("trichotomy branch undetermined");

  // Histogram over a strided subsample keeps the pair count bounded.
  {
    const std::size_t cap = 1000;
    const std::size_t stride = std::max<std::size_t>(1, (om.points.size() + cap - 1) / cap);
    std::vector<Vector> sub;
    for (std::size_t i = 0; i < om.points.size(); i += stride) sub.push_back(om.points[i]);
    oc.artifacts.margins = margin_histogram(sub, cone, ap.histogram_bins);
  }

  const QuadraticCone* q = cone.quadratic();
  j["periodic"] = nullptr;
  j["chain"] = nullptr;
  if (q && q->rank() == 2 && om.converged) {
    PeriodicOptions po;
    po.tol_per = ap.tol_per;
    po.integrator = s.integrator;
    oc.artifacts.periodic = detect_periodic(om, f, *q, po);
    if (const auto& p = oc.artifacts.periodic) {
      j["periodic"] = {{"period", p->period},
                       {"representative", detail::to_json(p->representative)},
                       {"closure_gap", p->closure_gap},
                       {"loop_diameter", p->loop_diameter},
                       {"loop_points", p->loop.size()},
                       {"tol_per", ap.tol_per},
                       {"projection_separation",
                        detail::num(projection_separation(om.points, make_projector(*q)))}};
      if (ap.chain_points > 0) {
        std::vector<Vector> pts;
        for (std::size_t k = 0; k < ap.chain_points; ++k) pts.push_back(p->loop[k * p->loop.size() / ap.chain_points]);
        ChainOptions co;
        co.integrator = s.integrator;
        const auto res = chain_check(pts, f, ap.chain_eps, ap.chain_r, co);
        std::size_t ok = 0, longest = 0;
        double max_jump = 0.0;
        for (const auto& r : res) {
          if (!r.success) continue;
          ++ok;
          longest = std::max(longest, r.hops.size());
          for (double jj : r.jumps) max_jump = std::max(max_jump, jj);
        }
        j["chain"] = {{"points", pts.size()}, {"successes", ok},       {"eps", ap.chain_eps},
                      {"r", ap.chain_r},      {"max_hops", longest},   {"max_jump", max_jump}};
      }
    }
  }

  j["issues"] = issues;
  j["status"] = issues.empty() ? "complete" : "incomplete";
  if (!issues.empty()) oc.exit_code = kExitIncomplete;
  return oc;
}

struct RunResult {
  Json report;
  std::vector<OrbitArtifacts> orbits;
  int exit_code = kExitOk;
};

inline Json report_header(const Scenario& s, const std::string& command) {
  Json r;
  r["tool"] = "kcone";
  r["version"] = KCONE_VERSION;
  r["command"] = command;
  r["scenario"] = {{"name", s.name}, {"digest", scenario_digest(s.source)}};
  r["seed"] = s.seed;
  return r;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Non-reproducible fields live under "metadata" only.
inline void stamp_metadata(Json& report, double wall_seconds) {
  report["metadata"] = {{"timestamp", utc_timestamp()}, {"wall_time_s", wall_seconds}, {"threads", worker_count()}};
}

inline RunResult run_certify_command(const Scenario& s) {
  const VectorField f = build_field(s);
  const auto cone = build_cone(s, f.dim);
  if (!cone) detail::schema_fail("/cone", "required property missing");
  RunResult rr;
  rr.report = report_header(s, "certify");
  const Json c = run_certify(s, f, *cone);
  for (const auto& [k, v] : c.items()) rr.report[k] = v;
  rr.report["status"] = "complete";
  return rr;
}

inline RunResult run_classify(const Scenario& s, bool with_certificate = true) {
  const VectorField f = build_field(s);
  const auto cone = build_cone(s, f.dim);
  if (!cone) detail::schema_fail("/cone", "required property missing");
  if (s.x0.empty()) detail::schema_fail("/x0", "required property missing");
  check_initial_conditions(s, f);

  RunResult rr;
  rr.report = report_header(s, "classify");
  if (with_certificate && (s.lambda || s.lambda_grid || f.family == FieldFamily::CyclicFeedback)) {
    const Json c = run_certify(s, f, *cone);
    for (const auto& [k, v] : c.items()) rr.report[k] = v;
  }

  std::vector<Vector> seeds = grid_seeds(f.domain, detail::seeds_per_axis(f.dim));
  const EquilibriumSearch eq = find_equilibria(f, seeds);
  std::vector<Vector> eq_points;
  Json eqj = Json::array();
  for (const auto& e : eq.equilibria) {
    eq_points.push_back(e.point);
    eqj.push_back({{"point", detail::to_json(e.point)}, {"residual", e.residual}});
  }
  rr.report["equilibria"] = {{"found", eqj}, {"seeds", seeds.size()}, {"dropped_seeds", eq.dropped_seeds},
                             {"tol_eq", eq.tol_eq}};

  std::vector<OrbitOutcome> outcomes(s.x0.size());
  parallel_for(s.x0.size(), [&](std::size_t i) { outcomes[i] = analyze_orbit(s, f, *cone, eq_points, i); });
  Json orbits = Json::array();
  for (auto& oc : outcomes) {
    orbits.push_back(std::move(oc.section));
    rr.orbits.push_back(std::move(oc.artifacts));
    if (oc.exit_code == kExitIntegration || rr.exit_code == kExitIntegration) rr.exit_code = kExitIntegration;
    else rr.exit_code = std::max(rr.exit_code, oc.exit_code);
  }
  rr.report["orbits"] = orbits;
  rr.report["status"] = rr.exit_code == kExitOk ? "complete"
                        : rr.exit_code == kExitIntegration ? "integration_failure"
                                                           : "incomplete";
  return rr;
}

// ---------------------------------------------------------------------------
// CSV sidecars

inline std::vector<std::string> projection_columns(const AnyCone& cone) {
  std::vector<std::string> cols;
  if (const QuadraticCone* q = cone.quadratic())
    for (int i = 1; i <= q->rank(); ++i) cols.push_back("u" + std::to_string(i));
  return cols;
}

inline void open_or_throw(std::ofstream& out, const std::filesystem::path& p) {
  out.open(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + p.string());
}

inline void write_omega_csv(const std::filesystem::path& p, const std::vector<Vector>& pts, int n,
                            const AnyCone& cone) {
  std::ofstream out;
  open_or_throw(out, p);
  for (int i = 1; i <= n; ++i) out << (i > 1 ? "," : "") << "x" << i;
  for (const auto& c : projection_columns(cone)) out << "," << c;
  out << "\n";
  std::optional<Projector> proj;
  if (const QuadraticCone* q = cone.quadratic()) proj = make_projector(*q);
  for (const Vector& x : pts) {
    for (Eigen::Index i = 0; i < x.size(); ++i) out << (i ? "," : "") << detail::fmt17(x(i));
    if (proj) {
      const Vector u = proj->coords(x);
      for (Eigen::Index i = 0; i < u.size(); ++i) out << "," << detail::fmt17(u(i));
    }
    out << "\n";
  }
  if (!out) throw Error(Errc::IoError, "write failed: " + p.string());
}

inline void write_loop_csv(std::ostream& out, const std::optional<PeriodicOrbit>& orbit, int n,
                           const AnyCone& cone) {
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  for (const auto& c : projection_columns(cone)) out << "," << c;
  out << "\n";
  if (!orbit) return;
  std::optional<Projector> proj;
  if (const QuadraticCone* q = cone.quadratic()) proj = make_projector(*q);
  for (std::size_t k = 0; k < orbit->loop.size(); ++k) {
    const Vector& x = orbit->loop[k];
    out << detail::fmt17(orbit->loop_times[k]);
    for (Eigen::Index i = 0; i < x.size(); ++i) out << "," << detail::fmt17(x(i));
    if (proj) {
      const Vector u = proj->coords(x);
      for (Eigen::Index i = 0; i < u.size(); ++i) out << "," << detail::fmt17(u(i));
    }
    out << "\n";
  }
}

inline void write_loop_csv(const std::filesystem::path& p, const std::optional<PeriodicOrbit>& orbit, int n,
                           const AnyCone& cone) {
  std::ofstream out;
  open_or_throw(out, p);
  write_loop_csv(out, orbit, n, cone);
  if (!out) throw Error(Errc::IoError, "write failed: " + p.string());
}

inline void write_margins_csv(const std::filesystem::path& p, const MarginHistogram& h) {
  std::ofstream out;
  open_or_throw(out, p);
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    out << detail::fmt17(h.edges[b]) << "," << detail::fmt17(h.edges[b + 1]) << "," << h.counts[b] << "\n";
  if (!out) throw Error(Errc::IoError, "write failed: " + p.string());
}

inline void write_trajectory_csv(const std::filesystem::path& p, const Trajectory& tr) {
  std::ofstream out;
  open_or_throw(out, p);
  out << "t";
  const Eigen::Index n = tr.states.empty() ? 0 : tr.states.front().size();
  for (Eigen::Index i = 1; i <= n; ++i) out << ",x" << i;
  out << "\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    out << detail::fmt17(tr.times[k]);
    for (Eigen::Index i = 0; i < n; ++i) out << "," << detail::fmt17(tr.states[k](i));
    out << "\n";
  }
  if (!out) throw Error(Errc::IoError, "write failed: " + p.string());
}

inline void write_json(const std::filesystem::path& p, const Json& j) {
  std::ofstream out;
  open_or_throw(out, p);
  out << j.dump(2) << "\n";
  if (!out) throw Error(Errc::IoError, "write failed: " + p.string());
}

/// CSV sidecars for orbit 0. Further orbits get an ".<index>" suffix.
inline void emit_plotdata(const std::filesystem::path& dir, const RunResult& rr, int n, const AnyCone& cone) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < rr.orbits.size(); ++i) {
    const std::string suffix = i == 0 ? "" : "." + std::to_string(i);
    const OrbitArtifacts& a = rr.orbits[i];
    write_trajectory_csv(dir / ("trajectory" + suffix + ".csv"), a.trajectory);
    write_omega_csv(dir / ("omega_points" + suffix + ".csv"), a.omega_points, n, cone);
    write_loop_csv(dir / ("loop" + suffix + ".csv"), a.periodic, n, cone);
    write_margins_csv(dir / ("margins" + suffix + ".csv"), a.margins);
  }
  if (rr.orbits.empty()) {
    write_omega_csv(dir / "omega_points.csv", {}, n, cone);
    write_loop_csv(dir / "loop.csv", std::nullopt, n, cone);
    write_margins_csv(dir / "margins.csv", {});
  }
}

}  // namespace kcone
