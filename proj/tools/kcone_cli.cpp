#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "kcone/report.hpp"

namespace {

using namespace kcone;

struct CommonFlags {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> pairs;
  std::string lambda_grid;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool grid) {
  cmd->add_option("--scenario", f.scenario, "Scenario JSON file")->required();
  cmd->add_option("--out", f.out, "Output path (file, or directory for `report`)");
  cmd->add_option("--seed", f.seed, "Override the scenario seed");
  cmd->add_option("--pairs", f.pairs, "Override the number of sampled pairs")->check(CLI::PositiveNumber);
  if (grid) cmd->add_option("--lambda-grid", f.lambda_grid, "Lambda scan MIN:MAX:STEP");
  cmd->add_flag("--quiet", f.quiet, "Suppress the summary on stderr");
}

LambdaGrid parse_grid(const std::string& text) {
  LambdaGrid g;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> g.min >> c1 >> g.max >> c2 >> g.step) || c1 != ':' || c2 != ':' || !in.eof() || !(g.step > 0) ||
      !(g.max >= g.min))
    throw CLI::ValidationError("--lambda-grid", "expected MIN:MAX:STEP with STEP > 0 and MAX >= MIN");
  return g;
}

Scenario load(const CommonFlags& f) {
  Scenario s = load_scenario(f.scenario);
  RunOverrides o;
  o.seed = f.seed;
  o.pairs = f.pairs;
  if (!f.lambda_grid.empty()) o.lambda_grid = parse_grid(f.lambda_grid);
  apply_overrides(s, o);
  return s;
}

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::SchemaError:
    case Errc::SyntaxError:
    case Errc::UnknownIdentifier:
    case Errc::ArityMismatch:
      return kExitSchema;
    case Errc::IntegrationFailure:
    case Errc::StepUnderflow:
    case Errc::NonFiniteState:
    case Errc::DomainExit:
      return kExitIntegration;
    case Errc::IoError:
      return kExitUsage;
    default:
      return kExitIncomplete;
  }
}

void emit_json(const Json& report, const std::string& out) {
  if (out.empty()) std::cout << report.dump(2) << "\n";
  else write_json(out, report);
}

void summarize(const CommonFlags& f, const Json& report) {
  if (f.quiet) return;
  std::cerr << "kcone " << report.value("command", "") << ": " << report.value("status", "") << "\n";
  if (report.contains("certificates"))
    for (const auto& c : report["certificates"])
      std::cerr << "  " << c["condition"].get<std::string>() << " " << c["verdict"].get<std::string>()
                << " worst_margin=" << c["worst_margin"].dump() << "\n";
  if (report.contains("orbits"))
    for (const auto& o : report["orbits"]) {
      std::cerr << "  orbit " << o["index"].dump() << ": " << o["status"].get<std::string>();
      if (o.contains("orbit_class")) std::cerr << " " << o["orbit_class"]["type"].get<std::string>();
      if (o.contains("trichotomy")) std::cerr << " " << o["trichotomy"]["branch"].get<std::string>();
      if (o.contains("periodic") && !o["periodic"].is_null()) std::cerr << " period=" << o["periodic"]["period"].dump();
      std::cerr << "\n";
    }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kcone: k-cone monotonicity certification and limit-set classification"};
  app.set_version_flag("--version", KCONE_VERSION);
  app.require_subcommand(1);

  CommonFlags fc, fk, fp, fr;
  auto* certify = app.add_subcommand("certify", "Check the monotonicity certificate of a scenario");
  add_common(certify, fc, true);
  auto* classify = app.add_subcommand("classify", "Integrate, estimate omega-limit sets and classify orbits");
  add_common(classify, fk, true);
  auto* poincare = app.add_subcommand("poincare", "Write the detected periodic loop as CSV");
  add_common(poincare, fp, false);
  auto* report = app.add_subcommand("report", "Write report.json plus CSV plot data into a directory");
  add_common(report, fr, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (certify->parsed()) {
      RunResult rr = run_certify_command(load(fc));
      stamp_metadata(rr.report, seconds_since(t0));
      emit_json(rr.report, fc.out);
      summarize(fc, rr.report);
      return rr.exit_code;
    }
    if (classify->parsed()) {
      RunResult rr = run_classify(load(fk));
      stamp_metadata(rr.report, seconds_since(t0));
      emit_json(rr.report, fk.out);
      summarize(fk, rr.report);
      return rr.exit_code;
    }
    if (poincare->parsed()) {
      const Scenario s = load(fp);
      RunResult rr = run_classify(s, false);
      const VectorField f = build_field(s);
      const AnyCone cone = *build_cone(s, f.dim);
      const std::optional<PeriodicOrbit> loop = rr.orbits.empty() ? std::nullopt : rr.orbits.front().periodic;
      if (fp.out.empty()) write_loop_csv(std::cout, loop, f.dim, cone);
      else write_loop_csv(std::filesystem::path(fp.out), loop, f.dim, cone);
      if (!fp.quiet) {
        if (loop) std::cerr << "kcone poincare: period " << detail::fmt17(loop->period) << ", " << loop->loop.size()
                            << " loop points\n";
        else std::cerr << "kcone poincare: no periodic orbit detected\n";
      }
      if (!loop) return rr.exit_code == kExitIntegration ? kExitIntegration : kExitIncomplete;
      return rr.exit_code;
    }
    if (report->parsed()) {
      if (fr.out.empty()) throw CLI::RequiredError("--out");
      const Scenario s = load(fr);
      RunResult rr = run_classify(s);
      rr.report["command"] = "report";
      stamp_metadata(rr.report, seconds_since(t0));
      const VectorField f = build_field(s);
      const std::filesystem::path dir(fr.out);
      emit_plotdata(dir, rr, f.dim, *build_cone(s, f.dim));
      write_json(dir / "report.json", rr.report);
      summarize(fr, rr.report);
      return rr.exit_code;
    }
  } catch (const Error& e) {
    std::cerr << "kcone: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const CLI::Error& e) {
    std::cerr << "kcone: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "kcone: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
