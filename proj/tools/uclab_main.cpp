// uclab: sampling-inequality laboratory for discretized Schrodinger operators.
//
// Exit codes: 0 all checks pass (advisories allowed), 1 hard check failure,
// 2 configuration or solver error. stdout carries the summary table only;
// diagnostics go to stderr.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uclab/uclab.hpp"

namespace {

using uclab::Json;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  int jobs = 1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
  std::string format = "both";  // json | csv | both
  bool plot = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_config) {
  auto* c = cmd->add_option("--config", opts.config_path, "config document (TOML or JSON)");
  if (needs_config) c->required();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--jobs", opts.jobs, "work-pool size cap")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", opts.seed, "override run.seed")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--set", opts.overrides, "override a config key (section.key=value)");
  cmd->add_option("--format", opts.format, "report format: json, csv or both")
      ->check(CLI::IsMember({"json", "csv", "both"}));
  cmd->add_flag("--plot", opts.plot, "also write plot.svg");
}

Json load_effective_config(const CommonOpts& opts) {
  Json cfg = uclab::load_config_file(opts.config_path);
  for (const auto& ov : opts.overrides) uclab::apply_override(cfg, ov);
  if (opts.seed_set) cfg["run"]["seed"] = opts.seed;
  return cfg;
}

void print_summary(const uclab::RunOutput& out) {
  const Json& s = out.report["summary"];
  std::cout << "verb            " << out.report["verb"].get<std::string>() << "\n";
  for (auto it = s.begin(); it != s.end(); ++it)
    std::cout << it.key() << std::string(std::max<int>(1, 16 - static_cast<int>(it.key().size())), ' ')
              << it.value().dump() << "\n";
  if (out.report.contains("records")) {
    const auto& recs = out.report["records"];
    std::cout << "records         " << recs.size() << "\n";
  }
}

int emit(const CommonOpts& opts, uclab::RunOutput out, double wall_ms) {
  out.report["wall_time_ms"] = wall_ms;
  namespace fs = std::filesystem;
  fs::path dir(opts.out_dir);
  if (opts.format == "json" || opts.format == "both")
    uclab::atomic_write(dir / "report.json", out.report.dump(2) + "\n");
  if (opts.format == "csv" || opts.format == "both") {
    std::string csv = uclab::csv_from_report(out.report);
    if (!csv.empty()) uclab::atomic_write(dir / "report.csv", csv);
  }
  if (opts.plot) uclab::atomic_write(dir / "plot.svg", uclab::svg_from_report(out.report));
  for (const auto& [name, bytes] : out.artifacts) uclab::atomic_write(dir / name, bytes);
  print_summary(out);
  if (out.solver_error) return 2;
  return out.hard_fail() ? 1 : 0;
}

int run_verb(const std::string& verb, const CommonOpts& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  Json cfg = load_effective_config(opts);
  uclab::RunOutput out;
  if (verb == "validate-geometry") out = uclab::run_validate_geometry(cfg, opts.jobs);
  else if (verb == "verify-thm1") out = uclab::run_verify_thm1(cfg, opts.jobs);
  else if (verb == "fit-exponent") out = uclab::run_fit_exponent(cfg, opts.jobs);
  else if (verb == "verify-projector") out = uclab::run_verify_projector(cfg, opts.jobs);
  else if (verb == "verify-residual") out = uclab::run_verify_residual(cfg, opts.jobs);
  else if (verb == "verify-weyl") out = uclab::run_verify_weyl(cfg, opts.jobs);
  else if (verb == "eigen") out = uclab::run_eigen(cfg, opts.jobs);
  else return 2;
  const double wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return emit(opts, std::move(out), wall_ms);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uclab: sampling inequalities for discretized Schrodinger operators"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  const std::vector<std::string> verbs = {"validate-geometry", "verify-thm1",
                                          "fit-exponent",      "verify-projector",
                                          "verify-residual",   "verify-weyl",
                                          "eigen"};
  std::vector<CommonOpts> opts(verbs.size());
  for (std::size_t i = 0; i < verbs.size(); ++i) {
    auto* cmd = app.add_subcommand(verbs[i]);
    add_common(cmd, opts[i], true);
  }
  auto* info = app.add_subcommand("info", "print tool and schema information");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream usage;
    usage << app.help();
    if (e.get_exit_code() == 0) {  // --help
      std::cout << usage.str();
      return 0;
    }
    std::cerr << "error: " << e.what() << "\n" << usage.str();
    return 2;
  }

  try {
    if (info->parsed()) {
      Json j;
      j["tool"] = "uclab";
      j["version"] = "1.0.0";
      j["verbs"] = verbs;
      j["potential_families"] = {"constant", "step", "periodic-cosine", "random-alloy"};
      j["formats"] = {"json", "csv", "svg", "pgm", "f64"};
      j["config_schema"] = uclab::default_config();
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    for (std::size_t i = 0; i < verbs.size(); ++i)
      if (app.get_subcommand(verbs[i])->parsed()) return run_verb(verbs[i], opts[i]);
  } catch (const uclab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
