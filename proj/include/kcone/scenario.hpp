#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kcone/cones.hpp"
#include "kcone/error.hpp"
#include "kcone/field.hpp"
#include "kcone/integrate.hpp"

namespace kcone {

using Json = nlohmann::ordered_json;

struct LambdaGrid {
  double min = 0.0, max = 0.0, step = 0.0;
};

struct AnalysisParams {
  double window_fraction = 0.5;
  double spacing = 0.02;
  double omega_tol = 0.0;  // 0: 1e-4 * domain diameter
  double dist_eq = 1e-6;
  double tol_per = 1e-2;
  double chain_eps = 1e-2;
  double chain_r = 0.5;
  std::size_t chain_points = 32;
  std::size_t classify_samples = 400;
  std::size_t histogram_bins = 50;
};

/// Validated scenario. `source` keeps the document as read, for digests.
struct Scenario {
  std::string name;
  Json field_spec;
  std::optional<Domain> domain;  // explicit override; families supply a default
  Json cone_spec;                // null when absent
  std::optional<double> lambda;
  std::optional<LambdaGrid> lambda_grid;
  std::optional<double> epsilon;
  std::vector<Vector> x0;
  double T = 100.0;
  IntegratorOptions integrator{};
  AnalysisParams analysis{};
  std::size_t pairs = 10000;
  std::uint64_t seed = 0;
  Json source;
};

namespace detail {

[[noreturn]] inline void schema_fail(const std::string& pointer, const std::string& what) {
  throw Error(Errc::SchemaError, what, pointer);
}

inline const Json& require_key(const Json& obj, const std::string& ptr, const char* key) {
  if (!obj.contains(key)) schema_fail(ptr + "/" + key, "required property missing");
  return obj.at(key);
}

inline double as_number(const Json& v, const std::string& ptr) {
  if (!v.is_number()) schema_fail(ptr, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema_fail(ptr, "expected a finite number");
  return d;
}

inline double positive_number(const Json& v, const std::string& ptr) {
  const double d = as_number(v, ptr);
  if (!(d > 0.0)) schema_fail(ptr, "expected a number > 0");
  return d;
}

inline std::size_t as_count(const Json& v, const std::string& ptr, std::size_t min = 1) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) schema_fail(ptr, "expected an integer");
  const auto i = v.get<long long>();
  if (i < static_cast<long long>(min)) schema_fail(ptr, "expected an integer >= " + std::to_string(min));
  return static_cast<std::size_t>(i);
}

inline Vector as_vector(const Json& v, const std::string& ptr) {
  if (!v.is_array() || v.empty()) schema_fail(ptr, "expected a non-empty array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = as_number(v[i], ptr + "/" + std::to_string(i));
  return out;
}

inline Matrix as_matrix(const Json& v, const std::string& ptr) {
  if (!v.is_array() || v.empty()) schema_fail(ptr, "expected a non-empty array of rows");
  const std::size_t rows = v.size();
  if (!v[0].is_array() || v[0].empty()) schema_fail(ptr + "/0", "expected a non-empty row");
  const std::size_t cols = v[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string rp = ptr + "/" + std::to_string(i);
    if (!v[i].is_array() || v[i].size() != cols) schema_fail(rp, "rows must all have " + std::to_string(cols) + " entries");
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = as_number(v[i][j], rp + "/" + std::to_string(j));
  }
  return m;
}

inline void only_keys(const Json& obj, const std::string& ptr, std::initializer_list<const char*> allowed) {
  for (const auto& [k, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) schema_fail(ptr + "/" + k, "unknown property");
  }
}

inline Domain parse_domain(const Json& d, const std::string& ptr) {
  if (!d.is_object()) schema_fail(ptr, "expected an object");
  only_keys(d, ptr, {"lo", "hi", "cylinder_radius"});
  const Vector lo = as_vector(require_key(d, ptr, "lo"), ptr + "/lo");
  const Vector hi = as_vector(require_key(d, ptr, "hi"), ptr + "/hi");
  if (lo.size() != hi.size()) schema_fail(ptr + "/hi", "lo and hi differ in length");
  try {
    if (d.contains("cylinder_radius")) {
      if (lo.size() < 2) schema_fail(ptr + "/cylinder_radius", "cylinder needs dimension >= 2");
      return Domain::cylinder(positive_number(d["cylinder_radius"], ptr + "/cylinder_radius"), lo, hi);
    }
    return Domain::box(lo, hi);
  } catch (const Error& e) {
    if (e.code() == Errc::SchemaError) throw;
    schema_fail(ptr, e.what());
  }
}

}  // namespace detail

/// Checks structure and dimension consistency. Throws SchemaError with
/// a JSON pointer to the first offending location.
inline Scenario parse_scenario(const Json& doc) {
  using namespace detail;
  if (!doc.is_object()) schema_fail("", "scenario must be a JSON object");
  only_keys(doc, "", {"name", "field", "domain", "cone", "lambda", "lambda_grid", "epsilon", "x0", "T", "rtol",
                      "atol", "max_step", "analysis", "pairs", "seed"});
  Scenario s;
  s.source = doc;
  if (doc.contains("name")) {
    if (!doc["name"].is_string()) schema_fail("/name", "expected a string");
    s.name = doc["name"].get<std::string>();
  }

  const Json& field = require_key(doc, "", "field");
  if (!field.is_object()) schema_fail("/field", "expected an object");
  if (field.contains("exprs") == field.contains("family")) {
    schema_fail("/field", "exactly one of 'family' or 'exprs' is required");
  }
  if (field.contains("family")) {
    if (!field["family"].is_string()) schema_fail("/field/family", "expected a string");
    const std::string fam = field["family"].get<std::string>();
    if (fam == "linear") {
      only_keys(field, "/field", {"family", "A"});
      const Matrix a = as_matrix(require_key(field, "/field", "A"), "/field/A");
      if (a.rows() != a.cols()) schema_fail("/field/A", "A must be square");
    } else if (fam == "hopf_cylinder") {
      only_keys(field, "/field", {"family", "omega", "c"});
      as_number(require_key(field, "/field", "omega"), "/field/omega");
      as_number(require_key(field, "/field", "c"), "/field/c");
    } else if (fam == "cyclic_feedback") {
      only_keys(field, "/field", {"family", "n", "kind", "decay", "theta", "hill_n", "ramp_lo", "ramp_hi", "floor_slope"});
      as_count(require_key(field, "/field", "n"), "/field/n", 3);
      const Json& kind = require_key(field, "/field", "kind");
      if (!kind.is_string() || (kind != "smooth_goodwin" && kind != "glass_pwl")) {
        schema_fail("/field/kind", "expected 'smooth_goodwin' or 'glass_pwl'");
      }
      for (const char* k : {"decay", "theta", "hill_n", "ramp_lo", "ramp_hi", "floor_slope"})
        if (field.contains(k)) as_number(field[k], std::string("/field/") + k);
    } else if (fam == "competitive_lv") {
      only_keys(field, "/field", {"family", "A", "r"});
      const Matrix a = as_matrix(require_key(field, "/field", "A"), "/field/A");
      const Vector r = as_vector(require_key(field, "/field", "r"), "/field/r");
      if (a.rows() != a.cols() || a.rows() != r.size()) schema_fail("/field/A", "A must be n x n with n = len(r)");
    } else {
      schema_fail("/field/family", "unknown family '" + fam + "'");
    }
  } else {
    only_keys(field, "/field", {"exprs", "params"});
    const Json& ex = field["exprs"];
    if (!ex.is_array() || ex.empty()) schema_fail("/field/exprs", "expected a non-empty array of strings");
    for (std::size_t i = 0; i < ex.size(); ++i)
      if (!ex[i].is_string()) schema_fail("/field/exprs/" + std::to_string(i), "expected a string");
    if (field.contains("params")) {
      if (!field["params"].is_object()) schema_fail("/field/params", "expected an object");
      for (const auto& [k, v] : field["params"].items()) as_number(v, "/field/params/" + k);
    }
    if (!doc.contains("domain")) schema_fail("/domain", "required for expression fields");
  }
  s.field_spec = field;

  if (doc.contains("domain")) s.domain = parse_domain(doc["domain"], "/domain");

  if (doc.contains("cone")) {
    const Json& c = doc["cone"];
    if (!c.is_object()) schema_fail("/cone", "expected an object");
    const Json& type = require_key(c, "/cone", "type");
    if (!type.is_string()) schema_fail("/cone/type", "expected a string");
    if (type == "quadratic") {
      only_keys(c, "/cone", {"type", "P", "band"});
      const Matrix p = as_matrix(require_key(c, "/cone", "P"), "/cone/P");
      if (p.rows() != p.cols()) schema_fail("/cone/P", "P must be square");
    } else if (type == "orthant_complement" || type == "orthant_union") {
      only_keys(c, "/cone", {"type", "n", "band"});
      as_count(require_key(c, "/cone", "n"), "/cone/n", 2);
    } else {
      schema_fail("/cone/type", "expected 'quadratic', 'orthant_complement' or 'orthant_union'");
    }
    if (c.contains("band")) positive_number(c["band"], "/cone/band");
    s.cone_spec = c;
  }

  if (doc.contains("lambda")) s.lambda = as_number(doc["lambda"], "/lambda");
  if (doc.contains("lambda_grid")) {
    const Json& g = doc["lambda_grid"];
    if (!g.is_object()) schema_fail("/lambda_grid", "expected an object");
    only_keys(g, "/lambda_grid", {"min", "max", "step"});
    LambdaGrid lg;
    lg.min = as_number(require_key(g, "/lambda_grid", "min"), "/lambda_grid/min");
    lg.max = as_number(require_key(g, "/lambda_grid", "max"), "/lambda_grid/max");
    lg.step = positive_number(require_key(g, "/lambda_grid", "step"), "/lambda_grid/step");
    if (lg.max < lg.min) schema_fail("/lambda_grid/max", "max must be >= min");
    s.lambda_grid = lg;
  }
  if (doc.contains("epsilon")) s.epsilon = positive_number(doc["epsilon"], "/epsilon");

  if (doc.contains("x0")) {
    const Json& x = doc["x0"];
    if (!x.is_array() || x.empty()) schema_fail("/x0", "expected a vector or a list of vectors");
    if (x[0].is_array()) {
      for (std::size_t i = 0; i < x.size(); ++i) s.x0.push_back(as_vector(x[i], "/x0/" + std::to_string(i)));
    } else {
      s.x0.push_back(as_vector(x, "/x0"));
    }
  }
  if (doc.contains("T")) s.T = positive_number(doc["T"], "/T");
  if (doc.contains("rtol")) s.integrator.rtol = positive_number(doc["rtol"], "/rtol");
  if (doc.contains("atol")) s.integrator.atol = positive_number(doc["atol"], "/atol");
  if (doc.contains("max_step")) s.integrator.max_step = positive_number(doc["max_step"], "/max_step");
  if (doc.contains("pairs")) s.pairs = as_count(doc["pairs"], "/pairs");
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !(doc["seed"].is_number_integer() && doc["seed"].get<long long>() >= 0))
      schema_fail("/seed", "expected a non-negative integer");
    s.seed = doc["seed"].get<std::uint64_t>();
  }

  if (doc.contains("analysis")) {
    const Json& a = doc["analysis"];
    if (!a.is_object()) schema_fail("/analysis", "expected an object");
    only_keys(a, "/analysis", {"window_fraction", "spacing", "omega_tol", "dist_eq", "tol_per", "chain_eps", "chain_r",
                               "chain_points", "classify_samples", "histogram_bins"});
    AnalysisParams& p = s.analysis;
    if (a.contains("window_fraction")) {
      p.window_fraction = positive_number(a["window_fraction"], "/analysis/window_fraction");
      if (p.window_fraction > 0.5) schema_fail("/analysis/window_fraction", "must be <= 0.5 (run covers two windows)");
    }
    if (a.contains("spacing")) p.spacing = positive_number(a["spacing"], "/analysis/spacing");
    if (a.contains("omega_tol")) p.omega_tol = positive_number(a["omega_tol"], "/analysis/omega_tol");
    if (a.contains("dist_eq")) p.dist_eq = positive_number(a["dist_eq"], "/analysis/dist_eq");
    if (a.contains("tol_per")) p.tol_per = positive_number(a["tol_per"], "/analysis/tol_per");
    if (a.contains("chain_eps")) p.chain_eps = positive_number(a["chain_eps"], "/analysis/chain_eps");
    if (a.contains("chain_r")) p.chain_r = positive_number(a["chain_r"], "/analysis/chain_r");
    if (a.contains("chain_points")) p.chain_points = as_count(a["chain_points"], "/analysis/chain_points", 0);
    if (a.contains("classify_samples")) p.classify_samples = as_count(a["classify_samples"], "/analysis/classify_samples", 10);
    if (a.contains("histogram_bins")) p.histogram_bins = as_count(a["histogram_bins"], "/analysis/histogram_bins");
  }
  return s;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::SchemaError, std::string("scenario is not valid JSON: ") + e.what(), std::string());
  }
}

inline Scenario load_scenario(const std::string& path) { return parse_scenario(read_json_file(path)); }

/// Builds the vector field; an explicit scenario domain replaces the family default.
inline VectorField build_field(const Scenario& s) {
  const Json& f = s.field_spec;
  VectorField out;
  try {
    if (f.contains("exprs")) {
      std::vector<std::string> exprs;
      for (const auto& e : f["exprs"]) exprs.push_back(e.get<std::string>());
      std::map<std::string, double> params;
      if (f.contains("params"))
        for (const auto& [k, v] : f["params"].items()) params[k] = v.get<double>();
      const int n = static_cast<int>(exprs.size());
      if (s.domain->dim() != n) detail::schema_fail("/domain", "dimension differs from the number of expressions");
      for (std::size_t i = 0; i < exprs.size(); ++i) {
        try {
          parse_expression(exprs[i], n, params);
        } catch (const Error& e) {
          std::string msg = e.what();
          if (e.position() != Error::npos) msg += " (at column " + std::to_string(e.position()) + ")";
          detail::schema_fail("/field/exprs/" + std::to_string(i), msg);
        }
      }
      return parse_field(exprs, params, *s.domain);
    }
    const std::string fam = f["family"].get<std::string>();
    if (fam == "linear") {
      const Matrix a = detail::as_matrix(f["A"], "/field/A");
      if (!s.domain) detail::schema_fail("/domain", "required for the linear family");
      return make_linear_field(a, *s.domain);
    }
    if (fam == "hopf_cylinder") {
      out = make_hopf_cylinder(f["omega"].get<double>(), f["c"].get<double>());
    } else if (fam == "cyclic_feedback") {
      CyclicParams p;
      auto get = [&](const char* k, double& dst) {
        if (f.contains(k)) dst = f[k].get<double>();
      };
      get("decay", p.decay);
      get("theta", p.theta);
      get("hill_n", p.hill_n);
      get("ramp_lo", p.ramp_lo);
      get("ramp_hi", p.ramp_hi);
      get("floor_slope", p.floor_slope);
      const auto kind = f["kind"] == "glass_pwl" ? CyclicKind::GlassPwl : CyclicKind::SmoothGoodwin;
      out = make_cyclic_feedback(f["n"].get<int>(), kind, p);
    } else {
      out = make_competitive_lv(detail::as_matrix(f["A"], "/field/A"), detail::as_vector(f["r"], "/field/r"));
    }
  } catch (const Error& e) {
    if (e.code() == Errc::SchemaError) throw;
    if (e.code() == Errc::BadParameter || e.code() == Errc::DimensionMismatch) detail::schema_fail("/field", e.what());
    throw;
  }
  if (s.domain) {
    if (s.domain->dim() != out.dim) detail::schema_fail("/domain", "dimension differs from the field");
    out.domain = *s.domain;
  }
  return out;
}

inline std::optional<AnyCone> build_cone(const Scenario& s, int n) {
  if (s.cone_spec.is_null()) return std::nullopt;
  const Json& c = s.cone_spec;
  const double band = c.contains("band") ? c["band"].get<double>() : kDefaultBand;
  const std::string type = c["type"].get<std::string>();
  if (type == "quadratic") {
    const Matrix p = detail::as_matrix(c["P"], "/cone/P");
    if (p.rows() != n) detail::schema_fail("/cone/P", "P dimension differs from the field");
    try {
      return AnyCone(make_quadratic_cone(p, band));
    } catch (const Error& e) {
      detail::schema_fail("/cone/P", e.what());
    }
  }
  const int cn = c["n"].get<int>();
  if (cn != n) detail::schema_fail("/cone/n", "cone dimension differs from the field");
  if (type == "orthant_complement") return AnyCone(OrthantComplementCone(cn, band));
  return AnyCone(ConvexUnionCone(cn, band));
}

/// Initial conditions must match the field and start inside its domain.
inline void check_initial_conditions(const Scenario& s, const VectorField& f) {
  for (std::size_t i = 0; i < s.x0.size(); ++i) {
    const std::string ptr = s.x0.size() == 1 && !s.source["x0"][0].is_array() ? "/x0" : "/x0/" + std::to_string(i);
    if (s.x0[i].size() != f.dim) detail::schema_fail(ptr, "length differs from the field dimension");
    if (!f.domain.contains(s.x0[i], 1e-12 * std::max(1.0, f.domain.diameter())))
      detail::schema_fail(ptr, "initial condition outside the domain");
  }
}

/// FNV-1a over the compact dump of the scenario as read.
inline std::string scenario_digest(const Json& doc) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : doc.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return "fnv1a64:" + os.str();
}

}  // namespace kcone
