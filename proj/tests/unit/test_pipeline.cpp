#include <doctest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "hetprod/pipeline.hpp"

using namespace hetprod;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig demo(const fs::path& out) {
  RunConfig c = load_config(fs::path(HETPROD_DATA_DIR) / "demo_config.json");
  c.output_dir = out.string();
  c.log_every = 0;
  return c;
}
}  // namespace

TEST_CASE("config parsing, settings and round trip") {
  json j = json::parse(R"({"model": {"family": "ces"}, "solver": {"tol": 1e-7}})");
  apply_setting(j, "grid.overrides.sigma.points=5");
  apply_setting(j, "output_dir=runs/x");
  apply_setting(j, "analytics.anova=[\"sector_size_joint\"]");
  const RunConfig c = parse_config(j);
  CHECK(c.family == ModelFamily::GeneralizedCES);
  CHECK(*c.tol == 1e-7);
  CHECK(c.grid_overrides.at("sigma").points == 5);
  CHECK(c.output_dir == "runs/x");
  CHECK(c.analytics.anova == std::vector<AnovaGrouping>{AnovaGrouping::SectorSizeJoint});
  const RunConfig back = parse_config(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK_THROWS_AS(parse_config(json::parse(R"({"solvr": {}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"solver": {"tol": "x"}})")), ConfigError);
  CHECK_THROWS_AS(apply_setting(j, "novalue"), ConfigError);
  RunConfig bad;
  bad.threads = 0;
  CHECK_THROWS_AS(bad.validate(false), ConfigError);
  bad.threads = 1;
  bad.memory_budget_bytes = 1000;
  CHECK_THROWS_AS(bad.validate(false), ConfigError);
}

TEST_CASE("demo estimate writes the full artifact set, reproducibly") {
  const fs::path root = fixture::temp_dir("pipeline");
  const EstimateOutcome out = run_estimate(demo(root / "a"));
  CHECK(out.converged);
  CHECK(out.support_size <= 20);
  for (const char* f : {"pi_star.csv", "firm_posteriors.csv", "moments.json", "solver_report.json",
                        "ttp.csv", "ttp_summary.csv", "markups.csv", "markups_summary.csv",
                        "anova.csv", "dominance.csv", "hist_alpha_bar.svg", "hist_ttp_tfp.svg",
                        "config.json"})
    CHECK_MESSAGE(fs::exists(root / "a" / f), f);
  const json report = json::parse(slurp(root / "a" / "solver_report.json"));
  CHECK(report["converged"].get<bool>());
  const auto trace = report["loglik_trace"].get<std::vector<double>>();
  for (std::size_t n = 1; n < trace.size(); ++n) CHECK(trace[n] >= trace[n - 1] - 1e-10);

  run_estimate(demo(root / "b"));
  for (const auto& e : fs::directory_iterator(root / "a")) {
    if (e.path().filename() == "config.json") continue;
    CHECK_MESSAGE(slurp(e.path()) == slurp(root / "b" / e.path().filename()), e.path().string());
  }
  // Regenerated figures are identical.
  fs::remove(root / "b" / "hist_beta.svg");
  write_figures(root / "b");
  CHECK(slurp(root / "a" / "hist_beta.svg") == slurp(root / "b" / "hist_beta.svg"));
  // Config echo reloads to the same run.
  const RunConfig echoed = load_config(root / "a" / "config.json");
  CHECK(echoed.input == demo(root / "a").input);
}

TEST_CASE("missing input is a config error with no outputs") {
  const fs::path root = fixture::temp_dir("missing");
  RunConfig c = demo(root / "out");
  c.input = (root / "nope.csv").string();
  try {
    run_estimate(c);
    FAIL("expected an exception");
  } catch (const std::exception& e) {
    CHECK(exit_code_for(e) == ExitCode::kConfig);
  }
  CHECK_FALSE(fs::exists(root / "out"));
}

TEST_CASE("failed runs leave no partial artifacts") {
  const fs::path root = fixture::temp_dir("staging");
  CHECK_THROWS(with_staging_dir(root / "out", [](const fs::path& dir) {
    std::ofstream(dir / "partial.csv") << "x\n";
    throw DataError("boom");
  }));
  CHECK_FALSE(fs::exists(root / "out" / "partial.csv"));
  std::size_t leftovers = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(root)) ++leftovers;
  CHECK(leftovers == 0);
}

TEST_CASE("analytics subcommands reproduce the estimate artifacts") {
  const fs::path root = fixture::temp_dir("analytics_cmd");
  run_estimate(demo(root / "run"));
  RunConfig c = demo(root / "again");
  run_analytics(c, root / "run", true, true, true);
  for (const char* f : {"ttp.csv", "markups_summary.csv", "anova.csv"})
    CHECK(slurp(root / "run" / f) == slurp(root / "again" / f));
  run_ols_baseline(demo(root / "ols"));
  CHECK(fs::exists(root / "ols" / "ols_firms.csv"));
  const json g = describe_grid(demo(root / "g"));
  CHECK(g["num_types"].get<std::uint64_t>() == 8 * 6 * 6 * 3 * 3 * 4);
}

TEST_CASE("small simulation run and invalid covariance") {
  const fs::path root = fixture::temp_dir("simulate");
  RunConfig c;
  c.output_dir = (root / "sim").string();
  c.simulation.firms = 50;
  c.simulation.replications = 1;
  c.grid_overrides["alpha0"] = AxisOverride{std::nullopt, std::nullopt, 10};
  c.grid_overrides["beta"] = AxisOverride{std::nullopt, std::nullopt, 8};
  const SimulationResult r = run_simulate(c);
  CHECK(r.replications.size() == 1);
  CHECK(fs::exists(root / "sim" / "bias_mse.csv"));
  CHECK(fs::exists(root / "sim" / "simulation.json"));
  c.simulation.cov = std::vector<double>(36, 1.0);
  (*c.simulation.cov)[0] = -1.0;
  try {
    run_simulate(c);
    FAIL("expected an exception");
  } catch (const std::exception& e) {
    CHECK(exit_code_for(e) == ExitCode::kConfig);
  }
}
