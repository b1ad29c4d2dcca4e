// Acceptance gates. Prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. Usage: acceptance [path-to-kcone-cli]

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "kcone/report.hpp"

using namespace kcone;

namespace {

constexpr double kPi = std::numbers::pi;

Vector v3(double a, double b, double c) {
  Vector v(3);
  v << a, b, c;
  return v;
}

QuadraticCone saddle() { return make_quadratic_cone(v3(-1, -1, 1).asDiagonal()); }

/// Collects failed checks for one criterion; the first few go into the summary line.
struct Gate {
  std::vector<std::string> failures;
  std::vector<std::string> notes;
  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

struct HopfRun {
  VectorField field;
  Trajectory traj;
  OmegaEstimate omega;
};

const HopfRun& hopf_run(double omega) {
  static std::map<double, HopfRun> cache;
  auto it = cache.find(omega);
  if (it != cache.end()) return it->second;
  HopfRun r;
  r.field = make_hopf_cylinder(omega, 4.0);
  IntegratorOptions io;
  r.traj = integrate(r.field, v3(0.1, 0, 0.5), 200.0, io);
  r.omega = estimate_omega(r.traj, {}, r.field.domain.diameter());
  return cache.emplace(omega, std::move(r)).first->second;
}

// 1. Linear certificate consistency.
void criterion1(Gate& g) {
  const QuadraticCone c = saddle();
  const Matrix p = c.matrix();
  const Matrix a = -p;
  const CertificateReport lin = certify_linear(a, c, 0.0);
  g.check(std::abs(lin.worst_margin + 2.0) <= 1e-12, "LinearLMI max eig " + fmt(lin.worst_margin) + " != -2");
  g.check(lin.passed(), "LinearLMI verdict");
  const VectorField f = make_linear_field(a, Domain::cube(3, -2, 2));
  const CertificateReport s = certify_sampled(f, c, 0.0, f.domain, 10000, 1);
  g.check(std::abs(s.worst_margin + 1.0) <= 1e-10, "sampled worst " + fmt(s.worst_margin) + " != -1");
  g.check(s.n_samples + s.n_skipped == 10000, "sampled pair count");
  g.note("LMI=" + fmt(lin.worst_margin) + " sampled=" + fmt(s.worst_margin));
}

// 2. e^{2 lambda t} V decay and strong ordering wherever the sampled certificate passes.
void criterion2(Gate& g) {
  Matrix spiral(3, 3);
  spiral << -1, -2, 0, 2, -1, 0, 0, 0, -4;
  const VectorField lin = make_linear_field(spiral, Domain::cube(3, -3, 3));
  const VectorField hopf = make_hopf_cylinder(1.0, 4.0);
  struct Case {
    const char* name;
    const VectorField* f;
    double lambda;
    Domain start;
  };
  const std::vector<Case> cases = {{"linear", &lin, 2.5, Domain::cube(3, -2, 2)},
                                   {"hopf", &hopf, 3.5, hopf.domain}};
  const QuadraticCone c = saddle();
  std::size_t ordered_pairs = 0;
  for (const Case& cs : cases) {
    const CertificateReport cert = certify_sampled(*cs.f, c, cs.lambda, cs.f->domain, 10000, 1);
    g.check(cert.passed(), std::string(cs.name) + ": certificate does not pass");
    Rng rng(99);
    for (int k = 0; k < 20; ++k) {
      const Vector x = cs.start.sample(rng), y = cs.start.sample(rng);
      const DecayReport r = decay_audit(*cs.f, c, cs.lambda, x, y, 5.0);
      g.check(r.decreasing, std::string(cs.name) + " pair " + std::to_string(k) + ": g not strictly decreasing");
      if (r.initially_ordered) {
        ++ordered_pairs;
        g.check(r.strongly_ordered_after, std::string(cs.name) + " pair " + std::to_string(k) + ": lost strong order");
      }
      if (cs.f == &lin) {
        // Closed form: d(t) = e^{At} d0 with a rotation-decay block and e^{-4t}.
        const Vector d0 = x - y;
        double worst = 0.0;
        for (std::size_t j = 0; j < r.times.size(); ++j) {
          const double t = r.times[j];
          const double e1 = std::exp(-t), cs2 = std::cos(2 * t), sn2 = std::sin(2 * t);
          const double d1 = e1 * (cs2 * d0(0) - sn2 * d0(1));
          const double d2 = e1 * (sn2 * d0(0) + cs2 * d0(1));
          const double d3 = std::exp(-4 * t) * d0(2);
          const double v = -d1 * d1 - d2 * d2 + d3 * d3;
          const double expect = std::exp(2 * cs.lambda * t) * v;
          worst = std::max(worst, std::abs(r.g[j] - expect) / std::max(1e-300, std::abs(expect) + 1e-12));
        }
        g.check(worst < 1e-6, "linear pair " + std::to_string(k) + ": g deviates from closed form by " + fmt(worst));
      }
    }
  }
  g.note("40 pairs, " + std::to_string(ordered_pairs) + " initially ordered");
}

// 3. Hopf cylinder certificate with a brute-force Jacobian oracle.
void criterion3(Gate& g) {
  const double omega = 1.0, lambda = 3.5, R = 1.2;
  double lowest = std::numeric_limits<double>::infinity();
  const int N = 200;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const double x1 = -R + 2 * R * i / (N - 1), x2 = -R + 2 * R * j / (N - 1);
      const double r2 = x1 * x1 + x2 * x2;
      if (r2 > R * R) continue;
      // Symmetric part of the planar Jacobian; omega cancels.
      const double a = 1 - r2 - 2 * x1 * x1, d = 1 - r2 - 2 * x2 * x2, b = -2 * x1 * x2;
      const double mean = 0.5 * (a + d), rad = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
      lowest = std::min(lowest, mean - rad);
    }
  g.check(lowest > -lambda, "planar sym-Jacobian bound " + fmt(lowest) + " <= -lambda");
  const VectorField f = make_hopf_cylinder(omega, 4.0);
  const CertificateReport r = certify_sampled(f, saddle(), lambda, f.domain, 100000, 3);
  g.check(r.passed() && r.worst_margin < 0.0, "certify_sampled worst " + fmt(r.worst_margin));
  g.note("grid min eig=" + fmt(lowest) + " worst margin=" + fmt(r.worst_margin) + " over " +
         std::to_string(r.n_samples) + " pairs");
}

// 4. Periodic limit set: TypeI, ordered, no equilibria, period 2 pi / omega.
void criterion4(Gate& g) {
  const QuadraticCone c = saddle();
  for (double omega : {1.0, 2.0}) {
    const HopfRun& run = hopf_run(omega);
    const std::string tag = "omega=" + fmt(omega) + ": ";
    g.check(run.omega.converged, tag + "omega estimate not converged");
    const OrbitClass oc = classify_orbit(run.traj, c);
    g.check(oc.type == OrbitType::TypeI, tag + "orbit not TypeI");
    const auto eq = find_equilibria(run.field, grid_seeds(run.field.domain, 5));
    g.check(eq.equilibria.size() == 1 && eq.equilibria[0].point.norm() < 1e-9, tag + "origin is not the sole equilibrium");
    double min_dist = std::numeric_limits<double>::infinity();
    for (const auto& p : run.omega.points) min_dist = std::min(min_dist, p.norm());
    g.check(min_dist > 1e-6 && std::abs(min_dist - 1.0) < 1e-3, tag + "distance to origin " + fmt(min_dist));
    const OrderingAudit a = audit_ordering(run.omega.points, c);
    g.check(a.ordered, tag + "audit not Ordered");
    g.check(a.max_margin <= -0.9, tag + "max pairwise margin " + fmt(a.max_margin));
    const auto per = detect_periodic(run.omega, run.field, c);
    const double target = 2 * kPi / omega;
    g.check(per.has_value(), tag + "no periodic orbit");
    if (per) {
      g.check(std::abs(per->period - target) <= 0.005 * target, tag + "period " + fmt(per->period));
      g.note(tag + "T*=" + fmt(per->period) + " max margin=" + fmt(a.max_margin) + " dist=" + fmt(min_dist));
    }
  }
}

// 5. Equilibrium branch along the e3 eigenline.
void criterion5(Gate& g) {
  const QuadraticCone c = saddle();
  const VectorField f = make_linear_field(-c.matrix(), Domain::cube(3, -2, 2));
  IntegratorOptions io;
  const Trajectory tr = integrate(f, v3(0, 0, 1), 40.0, io);
  const OrbitClass oc = classify_orbit(tr, c);
  g.check(oc.type == OrbitType::TypeII, "orbit not TypeII");
  double worst = 0.0, path_err = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double t = tr.times[i];
    // Mixed bound: relative while the state is large, atol-scale once it has decayed.
    path_err = std::max(path_err, (tr.states[i] - v3(0, 0, std::exp(-t))).norm() / (std::exp(-t) + 1e-3));
    for (std::size_t j = i + 1; j < tr.size(); j += 7) {
      const Vector d = tr.states[i] - tr.states[j];
      if (d.norm() > 0) worst = std::max(worst, std::abs(c.margin(d) - 1.0));
    }
  }
  g.check(worst <= 1e-12, "pairwise margins deviate from +1 by " + fmt(worst));
  g.check(path_err <= 1e-7, "deviation from e^{-t} e3: " + fmt(path_err));
  const OmegaEstimate om = estimate_omega(tr, {}, f.domain.diameter());
  double far = 0.0;
  for (const auto& p : om.points) far = std::max(far, p.norm());
  g.check(far <= 1e-6, "omega farther than 1e-6 from 0: " + fmt(far));
  const auto eq = find_equilibria(f, grid_seeds(f.domain, 3));
  std::vector<Vector> eqs;
  for (const auto& e : eq.equilibria) eqs.push_back(e.point);
  const TrichotomyReport tri = trichotomy_report(om, eqs, c, {});
  g.check(tri.branch == Branch::UnorderedEquilibria, std::string("branch ") + branch_name(tri.branch));
  g.note("max |Omega|=" + fmt(far) + " margin dev=" + fmt(worst));
}

// 6. Chain recurrence on the detected cycle.
void criterion6(Gate& g) {
  const HopfRun& run = hopf_run(1.0);
  const auto per = detect_periodic(run.omega, run.field, saddle());
  g.check(per.has_value(), "no periodic orbit");
  if (!per) return;
  std::vector<Vector> pts;
  for (std::size_t k = 0; k < 32; ++k) pts.push_back(per->loop[k * per->loop.size() / 32]);
  const auto res = chain_check(pts, run.field, 1e-2, 0.5);
  std::size_t ok = 0, one_hop = 0;
  double max_jump = 0.0;
  for (const auto& r : res) {
    if (!r.success) continue;
    ++ok;
    if (r.hops.size() == 1) ++one_hop;
    for (double j : r.jumps) max_jump = std::max(max_jump, j);
  }
  g.check(ok == 32, std::to_string(ok) + "/32 points pass");
  // The one-hop witness t1 = T* must exist independently of the search.
  double worst_return = 0.0;
  for (const auto& p : pts) worst_return = std::max(worst_return, (flow(run.field, p, per->period) - p).norm());
  g.check(worst_return < 1e-2, "Phi_T*(y) - y = " + fmt(worst_return));
  g.note(std::to_string(ok) + "/32 chains, " + std::to_string(one_hop) + " one-hop, max jump " + fmt(max_jump) +
         ", max |Phi_T*(y)-y| " + fmt(worst_return));
}

// 7. Projector and injectivity on Omega.
void criterion7(Gate& g) {
  const Projector pr = make_projector(saddle());
  const double err = (pr.theta - Matrix(v3(1, 1, 0).asDiagonal())).cwiseAbs().maxCoeff();
  g.check(err <= 1e-12, "Theta differs from diag(1,1,0) by " + fmt(err));
  const double sep = projection_separation(hopf_run(1.0).omega.points, pr);
  g.check(sep >= 0.99, "separation ratio " + fmt(sep));
  g.note("|Theta - diag(1,1,0)|=" + fmt(err) + " separation=" + fmt(sep));
}

// 8. Integrator quality gates.
void criterion8(Gate& g) {
  IntegratorOptions io;
  io.rtol = 1e-10;
  io.atol = 1e-12;
  VectorField decay;
  decay.dim = 1;
  decay.eval = [](const Vector& x) -> Vector { return -x; };
  decay.domain = Domain::cube(1, -10, 10);
  Vector one(1);
  one << 1.0;
  const double e1 = std::abs(integrate(decay, one, 1.0, io).final_state()(0) - std::exp(-1.0));
  g.check(e1 <= 1e-8, "x'=-x endpoint error " + fmt(e1));

  VectorField osc;
  osc.dim = 2;
  osc.eval = [](const Vector& x) -> Vector {
    Vector d(2);
    d << x(1), -x(0);
    return d;
  };
  osc.domain = Domain::cube(2, -10, 10);
  Vector x0(2);
  x0 << 1.0, 0.0;
  const Trajectory tr = integrate(osc, x0, 2 * kPi, io);
  const double ret = (tr.final_state() - x0).norm();
  double drift = 0.0;
  for (const auto& s : tr.states) drift = std::max(drift, std::abs(0.5 * s.squaredNorm() - 0.5));
  g.check(ret <= 1e-7, "oscillator return error " + fmt(ret));
  g.check(drift <= 1e-7, "energy drift " + fmt(drift));
  g.note("decay err=" + fmt(e1) + " return=" + fmt(ret) + " drift=" + fmt(drift));
}

// 9. Parser golden suite.
void criterion9(Gate& g) {
  struct Eval {
    const char* src;
    std::vector<double> vars;
    std::map<std::string, double> params;
    double expect;
  };
  const std::vector<Eval> evals = {
      {"2+3*4^2", {}, {}, 50},
      {"2^3^2", {}, {}, 512},
      {"-2^2", {}, {}, -4},
      {"(-2)^2", {}, {}, 4},
      {"2^-1", {}, {}, 0.5},
      {"8/4/2", {}, {}, 1},
      {"10-4-3", {}, {}, 3},
      {"--3", {}, {}, 3},
      {"-x1", {1, 2}, {}, -1},
      {"1.5e2 + .5", {}, {}, 150.5},
      {"min(3, -1) + max(2, 5)", {}, {}, 4},
      {"abs(-2.5)", {}, {}, 2.5},
      {"hill(2, 2, 3)", {}, {}, 0.5},
      {"2*hill(0, 1, 4) + pwl(0.6, 0.4, 0.6)", {}, {}, 3},
      {"pwl(0.5, 0, 1)", {}, {}, 0.5},
      {"pwl(-1, 0, 1)", {}, {}, 0},
      {"pwl(3, 0, 1)", {}, {}, 1},
      {"pwl(0.25, 1, 0)", {}, {}, 0.75},
      {"x1 - x2^3", {2, 1}, {}, 1},
      {"hill(x3, 1, 4) - b*x1", {0.5, 0, 1}, {{"b", 1.0}}, 0},
  };
  struct Bad {
    const char* src;
    std::size_t pos;
  };
  const std::vector<Bad> bads = {{"2+", 2}, {"(1+2", 4}, {"3*/4", 2}, {"1 2", 2}, {"sin(1,)", 6}};
  int passed = 0;
  for (const Eval& e : evals) {
    try {
      const double v = parse_expression(e.src, static_cast<int>(e.vars.size()), e.params).eval(e.vars);
      if (v == e.expect) ++passed;
      else g.check(false, std::string(e.src) + " -> " + fmt(v));
    } catch (const Error& err) {
      g.check(false, std::string(e.src) + " threw " + err.what());
    }
  }
  for (const Bad& b : bads) {
    try {
      parse_expression(b.src, 0);
      g.check(false, std::string(b.src) + " parsed");
    } catch (const Error& err) {
      const bool ok = err.code() == Errc::SyntaxError && err.position() == b.pos;
      if (ok) ++passed;
      else g.check(false, std::string(b.src) + " position " + std::to_string(err.position()));
    }
  }
  g.check(evals.size() + bads.size() == 25, "suite size");
  g.note(std::to_string(passed) + "/25 golden cases");
}

// 10. Goodwin cyclic feedback signs with a finite-difference oracle.
void criterion10(Gate& g) {
  const VectorField f = make_cyclic_feedback(3, CyclicKind::SmoothGoodwin);
  const std::vector<int> deltas{-1, +1, +1};
  const Domain dom = Domain::cube(3, 0.05, 3.0);
  const CertificateReport r = check_cyclic_feedback(f, deltas, dom, 1000, 11);
  g.check(r.passed(), "check_cyclic_feedback verdict");
  g.check(r.feedback_sign < 0, "feedback type not negative");
  g.check(r.n_samples == 1000, "sample count " + std::to_string(r.n_samples));
  std::mt19937_64 eng(2024);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  int bad = 0;
  const double h = 1e-6;
  for (int k = 0; k < 1000; ++k) {
    const Vector x = v3(u(eng), u(eng), u(eng));
    for (int i = 0; i < 3; ++i) {
      const int prev = (i + 2) % 3;
      Vector xp = x, xm = x;
      xp(prev) += h;
      xm(prev) -= h;
      const double fd = (f.eval(xp)(i) - f.eval(xm)(i)) / (2 * h);
      if (!(deltas[static_cast<std::size_t>(i)] * fd > 0)) ++bad;
    }
  }
  g.check(bad == 0, std::to_string(bad) + " finite-difference sign violations");
  g.note("verdict " + std::string(verdict_name(r.verdict)) + ", feedback negative, FD violations " +
         std::to_string(bad));
}

// 11. CLI determinism.
void criterion11(Gate& g, const std::string& cli) {
  if (cli.empty()) {
    g.check(false, "CLI path not supplied");
    return;
  }
  const std::string scenario = std::string(KCONE_SOURCE_DIR) + "/scenarios/hopf_cylinder.json";
  const auto dir = std::filesystem::temp_directory_path() / "kcone_acceptance_c11";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::vector<std::string> dumps;
  for (int run = 0; run < 2; ++run) {
    const auto out = dir / ("run" + std::to_string(run) + ".json");
    const std::string cmd = "\"" + cli + "\" classify --scenario \"" + scenario + "\" --seed 7 --quiet --out \"" +
                            out.string() + "\"";
    const int rc = std::system(cmd.c_str());
    g.check(rc == 0, "classify run " + std::to_string(run) + " returned " + std::to_string(rc));
    try {
      Json doc = read_json_file(out.string());
      g.check(doc.contains("metadata") && doc["metadata"].contains("timestamp"), "metadata.timestamp missing");
      doc.erase("metadata");
      dumps.push_back(doc.dump());
    } catch (const Error& e) {
      g.check(false, e.what());
    }
  }
  g.check(dumps.size() == 2 && dumps[0] == dumps[1], "reports differ outside metadata");
  g.note("2 runs, " + std::to_string(dumps.empty() ? 0 : dumps[0].size()) + " bytes each without metadata");
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<const char*, std::function<void(Gate&)>>> criteria = {
      {"linear certificate consistency", criterion1},
      {"decay law on certified fields", criterion2},
      {"Hopf cylinder certificate", criterion3},
      {"periodic limit set (TypeI, ordered, T* = 2pi/omega)", criterion4},
      {"equilibrium branch along e3", criterion5},
      {"chain recurrence on the cycle", criterion6},
      {"projector and injectivity", criterion7},
      {"integrator quality gates", criterion8},
      {"parser golden suite", criterion9},
      {"Goodwin cyclic feedback", criterion10},
      {"CLI determinism", [&](Gate& g) { criterion11(g, cli); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Gate g;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(g);
    } catch (const std::exception& e) {
      g.check(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = g.failures.empty();
    failed += ok ? 0 : 1;
    std::ostringstream line;
    line << (ok ? "PASS" : "FAIL") << " criterion " << (i + 1) << ": " << criteria[i].first << " (" << fmt(secs)
         << " s)";
    for (const auto& n : g.notes) line << " | " << n;
    for (std::size_t k = 0; k < g.failures.size() && k < 5; ++k) line << " | " << g.failures[k];
    std::cout << line.str() << std::endl;
  }
  std::cout << (failed == 0 ? "ALL 11 CRITERIA PASS" : std::to_string(failed) + " CRITERIA FAILED") << std::endl;
  return failed == 0 ? 0 : 1;
}
