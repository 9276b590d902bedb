#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hetprod/analytics.hpp"
#include "hetprod/errors.hpp"
#include "hetprod/panel_data.hpp"
#include "hetprod/param_grid.hpp"
#include "hetprod/simulator.hpp"

namespace hetprod {

// Smallest accepted memory budget: one default likelihood block.
inline constexpr std::size_t kMinMemoryBudget = 64 * 4096 * sizeof(double);

struct AnalyticsToggles {
  bool ttp = true;
  bool markups = true;  // skipped with a log line when no wage share is loaded
  std::vector<AnovaGrouping> anova{AnovaGrouping::Sector, AnovaGrouping::SectorSize};
  bool dominance = true;
  bool figures = true;
};

struct SimulationConfig {
  std::size_t firms = 500;
  int periods = 7;
  int replications = 20;
  double target_corr = -0.8;
  std::optional<double> within_sd_k;
  std::optional<double> within_sd_l;
  std::optional<int> sectors;
  std::optional<std::vector<double>> mean;  // 6 entries, DgpIndex order
  std::optional<std::vector<double>> cov;   // 36 entries, row-major
  bool calibrated_grid = true;              // start from the calibrated simulation grid
};

struct RunConfig {
  // input
  std::string input;
  ColumnMap columns;
  LoadOptions load;
  std::optional<std::pair<double, double>> trim;  // pooled quantile band
  // model and grid
  ModelFamily family = ModelFamily::DynamicCD;
  std::vector<int> grid_points;  // empty = family defaults
  std::map<std::string, AxisOverride> grid_overrides;
  // solver
  // Unset values take the estimation defaults (SolverOptions) or, for
  // simulation runs, the calibrated simulation settings.
  std::optional<double> tol;
  std::optional<double> loglik_tol;
  std::optional<int> max_iter;
  double support_threshold = 0.0;  // 0 = default
  int restarts = 0;                // random-start diagnostic runs
  int log_every = 100;
  std::string cache;  // optional log-density cache file
  // analytics
  AnalyticsToggles analytics;
  TTPReference ttp_reference;
  // run
  std::string output_dir = "out";
  int threads = 1;
  std::size_t memory_budget_bytes = std::size_t{2} << 30;
  std::uint64_t seed = 1;
  SimulationConfig simulation;

  // Throws ConfigError. `needs_input` is false for simulation runs.
  void validate(bool needs_input) const;
};

/// Parses a JSON configuration object. Unknown keys are rejected.
RunConfig parse_config(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
/// Round-trippable JSON form; the thread count is omitted because it never
/// changes results.
nlohmann::json config_to_json(const RunConfig& config);

/// Applies a dotted-key assignment ("solver.tol=1e-8") with the value parsed
/// as JSON when possible and as a string otherwise.
void apply_setting(nlohmann::json& j, const std::string& assignment);

/// One JSON object per line on standard error.
void log_event(const std::string& level, const std::string& event,
               nlohmann::json fields = nlohmann::json::object());

/// Writes into a fresh sibling directory and renames it over `target` only
/// when `body` returns normally. `body` receives the staging directory.
void with_staging_dir(const std::filesystem::path& target,
                      const std::function<void(const std::filesystem::path&)>& body);

ExitCode exit_code_for(const std::exception& e);

struct EstimateOutcome {
  bool converged = false;
  int iterations = 0;
  double loglik = 0.0;
  std::size_t support_size = 0;
};

/// Loads the panel named by the config, applying trimming and the intensive
/// transform when required.
PanelDataset load_config_panel(const RunConfig& config);

/// Full estimation pipeline. Artifacts are committed even when the solver
/// stops at max_iter; the outcome reports convergence.
EstimateOutcome run_estimate(const RunConfig& config);

DGPSpec simulation_dgp(const RunConfig& config);
SimulationOptions simulation_options(const RunConfig& config);
SimulationResult run_simulate(const RunConfig& config);

/// Grid summary for `grid describe`.
nlohmann::json describe_grid(const RunConfig& config);

/// Recompute analytics from an existing run directory (firm_posteriors.csv
/// plus the config's panel) into the output directory.
void run_analytics(const RunConfig& config, const std::filesystem::path& run_dir,
                   bool ttp, bool markups, bool anova);

void run_ols_baseline(const RunConfig& config);

/// Regenerates the SVG figures of a run directory from its CSV files.
void write_figures(const std::filesystem::path& run_dir);

}  // namespace hetprod
