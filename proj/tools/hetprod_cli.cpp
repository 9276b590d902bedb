// hetprod: command line front end.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hetprod/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hetprod;

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> settings;  // --set key.path=value
  std::string input;
  std::string family;
  std::string out;
  int threads = 0;
  double tol = 0.0;
  int max_iter = 0;
  double threshold = 0.0;
  std::size_t memory_budget = 0;
  long long seed = -1;
  int log_every = -1;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("-c,--config", f.config, "JSON run configuration");
  app->add_option("--set", f.settings, "override a config key, e.g. solver.tol=1e-8")
      ->take_all();
  app->add_option("--input", f.input, "input.path");
  app->add_option("--family", f.family, "model.family: cd | ces | intensive");
  app->add_option("-o,--out", f.out, "output_dir");
  app->add_option("--threads", f.threads, "threads");
  app->add_option("--tol", f.tol, "solver.tol");
  app->add_option("--max-iter", f.max_iter, "solver.max_iter");
  app->add_option("--threshold", f.threshold, "solver.support_threshold");
  app->add_option("--memory-budget", f.memory_budget, "memory_budget_bytes");
  app->add_option("--seed", f.seed, "seed");
  app->add_option("--log-every", f.log_every, "solver.log_every");
}

// Config file first, then --set assignments, then the named flags.
RunConfig resolve(const CommonFlags& f, const CLI::App* app) {
  json j = json::object();
  fs::path base;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ConfigError("cannot open config file " + f.config);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    base = fs::path(f.config).parent_path();
  }
  const std::string file_input = j.contains("input") && j["input"].contains("path")
                                     ? j["input"]["path"].get<std::string>()
                                     : std::string();
  for (const auto& s : f.settings) apply_setting(j, s);
  auto set = [&](const char* flag, const std::string& key, json value) {
    if (app->count(flag) > 0) apply_setting(j, key + "=" + value.dump());
  };
  set("--input", "input.path", f.input);
  set("--family", "model.family", f.family);
  set("--out", "output_dir", f.out);
  set("--threads", "threads", f.threads);
  set("--tol", "solver.tol", f.tol);
  set("--max-iter", "solver.max_iter", f.max_iter);
  set("--threshold", "solver.support_threshold", f.threshold);
  set("--memory-budget", "memory_budget_bytes", f.memory_budget);
  set("--seed", "seed", f.seed);
  set("--log-every", "solver.log_every", f.log_every);
  RunConfig c = parse_config(j);
  // An input path written in the config file is relative to that file.
  if (!c.input.empty() && c.input == file_input && fs::path(c.input).is_relative())
    c.input = (base / c.input).lexically_normal().string();
  return c;
}

int fail(const std::exception& e) {
  const ExitCode code = exit_code_for(e);
  log_event("error", "failed", {{"message", e.what()}, {"exit_code", static_cast<int>(code)}});
  return static_cast<int>(code);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Firm-level production function heterogeneity by nonparametric empirical Bayes"};
  app.require_subcommand(1);

  CommonFlags estimate_flags, simulate_flags, grid_flags, analytics_flags, ols_flags;
  auto* estimate = app.add_subcommand("estimate", "estimate the mixing distribution and posteriors");
  add_common(estimate, estimate_flags);

  auto* simulate = app.add_subcommand("simulate", "bias and MSE over simulated replications");
  add_common(simulate, simulate_flags);
  int replications = 0;
  std::size_t sim_firms = 0;
  simulate->add_option("--replications", replications, "simulation.replications");
  simulate->add_option("--firms", sim_firms, "simulation.firms");

  auto* grid = app.add_subcommand("grid", "grid utilities");
  grid->require_subcommand(1);
  auto* describe = grid->add_subcommand("describe", "print the grid that a config would use");
  add_common(describe, grid_flags);

  std::string run_dir;
  auto* ttp = app.add_subcommand("ttp", "total technology productivity from a finished run");
  auto* markups = app.add_subcommand("markups", "labor markups from a finished run");
  auto* anova = app.add_subcommand("anova", "variance decomposition from a finished run");
  for (auto* sub : {ttp, markups, anova}) {
    add_common(sub, analytics_flags);
    sub->add_option("--run", run_dir, "directory holding firm_posteriors.csv")->required();
  }

  auto* ols = app.add_subcommand("ols-baseline", "separate per-firm least squares");
  add_common(ols, ols_flags);

  std::string report_dir;
  auto* report = app.add_subcommand("report", "regenerate SVG figures from a run's CSV files");
  report->add_option("--run", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (estimate->parsed()) {
      const RunConfig c = resolve(estimate_flags, estimate);
      const EstimateOutcome out = run_estimate(c);
      return out.converged ? 0 : static_cast<int>(ExitCode::kNonConvergence);
    }
    if (simulate->parsed()) {
      if (simulate->count("--replications")) simulate_flags.settings.push_back("simulation.replications=" + std::to_string(replications));
      if (simulate->count("--firms")) simulate_flags.settings.push_back("simulation.firms=" + std::to_string(sim_firms));
      const RunConfig c = resolve(simulate_flags, simulate);
      const SimulationResult r = run_simulate(c);
      return r.failed == 0 ? 0 : static_cast<int>(ExitCode::kNonConvergence);
    }
    if (describe->parsed()) {
      std::cout << describe_grid(resolve(grid_flags, describe)).dump(2) << '\n';
      return 0;
    }
    for (auto* sub : {ttp, markups, anova}) {
      if (!sub->parsed()) continue;
      const RunConfig c = resolve(analytics_flags, sub);
      run_analytics(c, run_dir, sub == ttp, sub == markups, sub == anova);
      return 0;
    }
    if (ols->parsed()) {
      run_ols_baseline(resolve(ols_flags, ols));
      return 0;
    }
    if (report->parsed()) {
      write_figures(report_dir);
      return 0;
    }
  } catch (const std::exception& e) {
    return fail(e);
  }
  return static_cast<int>(ExitCode::kInternal);
}
