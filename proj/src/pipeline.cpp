#include "hetprod/pipeline.hpp"

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>

#include "hetprod/baseline_ols.hpp"
#include "hetprod/eb_solver.hpp"
#include "hetprod/io.hpp"
#include "hetprod/likelihood.hpp"
#include "hetprod/parallel.hpp"
#include "hetprod/posterior_stats.hpp"
#include "hetprod/stats.hpp"

namespace hetprod {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown config key " + where + "." + key);
  }
}

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key " + key + ": " + e.what());
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = get_as<T>(j, key);
}

template <class T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = get_as<T>(j, key);
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json moments_json(const PopulationMoments& m) {
  json out;
  out["source"] = m.source;
  out["columns"] = m.columns;
  out["mean"] = m.mean;
  out["sd"] = m.sd;
  out["p10"] = m.p10;
  out["p50"] = m.p50;
  out["p90"] = m.p90;
  json corr = json::array();
  for (Eigen::Index r = 0; r < m.correlation.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.correlation.cols()));
    for (Eigen::Index c = 0; c < m.correlation.cols(); ++c)
      row[static_cast<std::size_t>(c)] = m.correlation(r, c);
    corr.push_back(row);
  }
  out["correlation"] = corr;
  return out;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

std::span<const double> flat(const RowMatrix& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

ModelSpec config_model(const RunConfig& config, const PanelDataset& data) {
  return ModelSpec(config.family, data.num_periods());
}

SolverOptions estimation_solver(const RunConfig& config) {
  SolverOptions o;
  if (config.tol) o.tol = *config.tol;
  if (config.loglik_tol) o.loglik_tol = *config.loglik_tol;
  if (config.max_iter) o.max_iter = *config.max_iter;
  o.memory_budget_bytes = config.memory_budget_bytes;
  o.log_every = config.log_every;
  o.progress = [](const IterationInfo& it) {
    log_event("info", "iteration",
              {{"iteration", it.iteration}, {"loglik", it.loglik}, {"delta", it.delta}});
  };
  return o;
}

json grid_json(const GridSpec& grid) {
  json axes = json::array();
  for (const auto& a : grid.axes)
    axes.push_back({{"name", a.name}, {"min", a.min}, {"max", a.max}, {"points", a.points},
                    {"spacing", a.spacing()}});
  return axes;
}

// Writes the analytics selected by the flags into `dir`.
void write_analytics(const fs::path& dir, const std::vector<FirmPosterior>& posteriors,
                     const PanelDataset& data, const ModelSpec& model, const RunConfig& config,
                     bool ttp, bool markups, bool anova, bool dominance) {
  if (ttp) {
    if (model.family() == ModelFamily::IntensiveCD) {
      log_event("warn", "ttp_skipped", {{"reason", "not defined for the intensive family"}});
    } else {
      TTPReference ref = config.ttp_reference;
      if (!data.sector && !(ref.log_k0 && ref.log_l0)) {
        if (!ref.log_k0) ref.log_k0 = sample_quantile(flat(data.k), 0.5);
        if (!ref.log_l0) ref.log_l0 = sample_quantile(flat(data.l), 0.5);
        log_event("info", "ttp_reference", {{"reason", "no sector codes, pooled medians used"}});
      }
      write_ttp_csv(compute_ttp(posteriors, data, model, ref), (dir / "ttp.csv").string(),
                    (dir / "ttp_summary.csv").string());
    }
  }
  if (markups) {
    if (!data.wage_share)
      log_event("warn", "markups_skipped", {{"reason", "no wage share column"}});
    else
      write_markups_csv(compute_markups(posteriors, data, model), (dir / "markups.csv").string(),
                        (dir / "markups_summary.csv").string());
  }
  if (anova && !config.analytics.anova.empty()) {
    if (!data.sector) {
      log_event("warn", "anova_skipped", {{"reason", "no sector column"}});
    } else {
      std::vector<AnovaResult> results;
      for (AnovaGrouping g : config.analytics.anova)
        results.push_back(anova_decomposition(posteriors, data, model, g));
      write_anova_csv(results, (dir / "anova.csv").string());
    }
  }
  if (dominance) write_dominance_csv(dominance_diagnostic(posteriors), (dir / "dominance.csv").string());
}

std::vector<double> column_of(const DelimitedTable& t, std::string_view name) {
  const std::size_t c = t.column(name);
  std::vector<double> v;
  v.reserve(t.rows.size());
  for (const auto& row : t.rows) v.push_back(parse_cell(row[c]));
  return v;
}

std::vector<double> centered_at_median(std::vector<double> v) {
  const double m = sample_quantile(v, 0.5);
  for (double& x : v) x -= m;
  return v;
}

}  // namespace

// ---- configuration --------------------------------------------------------

void RunConfig::validate(bool needs_input) const {
  if (needs_input) {
    if (input.empty()) throw ConfigError("input.path is required");
    if (!fs::exists(input)) throw ConfigError("input file does not exist: " + input);
  }
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (memory_budget_bytes < kMinMemoryBudget)
    throw ConfigError("memory_budget_bytes is smaller than one likelihood block (" +
                      std::to_string(kMinMemoryBudget) + " bytes)");
  if (tol && !(*tol > 0.0)) throw ConfigError("solver.tol must be positive");
  if (loglik_tol && !(*loglik_tol >= 0.0)) throw ConfigError("solver.loglik_tol must be >= 0");
  if (max_iter && *max_iter < 1) throw ConfigError("solver.max_iter must be >= 1");
  if (support_threshold < 0.0) throw ConfigError("solver.support_threshold must be >= 0");
  if (restarts < 0) throw ConfigError("solver.restarts must be >= 0");
  if (log_every < 0) throw ConfigError("solver.log_every must be >= 0");
  if (trim && !(0.0 <= trim->first && trim->first < trim->second && trim->second <= 1.0))
    throw ConfigError("input.trim must satisfy 0 <= lower < upper <= 1");
  if (load.year_min && load.year_max && *load.year_min > *load.year_max)
    throw ConfigError("input.year_min exceeds input.year_max");
  for (int p : grid_points)
    if (p < 1) throw ConfigError("grid.points entries must be >= 1");
  if (simulation.firms < 2) throw ConfigError("simulation.firms must be >= 2");
  if (simulation.replications < 1) throw ConfigError("simulation.replications must be >= 1");
  if (simulation.mean && simulation.mean->size() != kDgpDim)
    throw ConfigError("simulation.mean needs 6 entries");
  if (simulation.cov && simulation.cov->size() != kDgpDim * kDgpDim)
    throw ConfigError("simulation.cov needs 36 entries");
}

RunConfig parse_config(const json& j) {
  check_keys(j, "config", {"input", "model", "grid", "solver", "analytics", "output_dir",
                           "threads", "memory_budget_bytes", "seed", "simulation"});
  RunConfig c;
  if (j.contains("input")) {
    const json& in = j["input"];
    check_keys(in, "input", {"path", "columns", "log_transform", "year_min", "year_max", "trim"});
    read_opt(in, "path", c.input);
    if (in.contains("columns")) {
      const json& cm = in["columns"];
      check_keys(cm, "input.columns", {"firm", "year", "output", "capital", "labor", "sector",
                                       "wage_share", "wage_bill", "revenue"});
      read_opt(cm, "firm", c.columns.firm);
      read_opt(cm, "year", c.columns.year);
      read_opt(cm, "output", c.columns.output);
      read_opt(cm, "capital", c.columns.capital);
      read_opt(cm, "labor", c.columns.labor);
      read_opt(cm, "sector", c.columns.sector);
      read_opt(cm, "wage_share", c.columns.wage_share);
      read_opt(cm, "wage_bill", c.columns.wage_bill);
      read_opt(cm, "revenue", c.columns.revenue);
    }
    read_opt(in, "log_transform", c.load.log_transform);
    read_opt(in, "year_min", c.load.year_min);
    read_opt(in, "year_max", c.load.year_max);
    if (in.contains("trim") && !in["trim"].is_null()) {
      const auto band = get_as<std::vector<double>>(in, "trim");
      if (band.size() != 2) throw ConfigError("input.trim needs [lower, upper]");
      c.trim = std::make_pair(band[0], band[1]);
    }
  }
  if (j.contains("model")) {
    check_keys(j["model"], "model", {"family"});
    if (j["model"].contains("family")) c.family = parse_family(get_as<std::string>(j["model"], "family"));
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, "grid", {"points", "overrides"});
    read_opt(g, "points", c.grid_points);
    if (g.contains("overrides")) {
      if (!g["overrides"].is_object()) throw ConfigError("grid.overrides must be an object");
      for (const auto& [name, o] : g["overrides"].items()) {
        check_keys(o, "grid.overrides." + name, {"min", "max", "points"});
        AxisOverride ov;
        read_opt(o, "min", ov.min);
        read_opt(o, "max", ov.max);
        read_opt(o, "points", ov.points);
        c.grid_overrides[name] = ov;
      }
    }
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    check_keys(s, "solver", {"tol", "loglik_tol", "max_iter", "support_threshold", "restarts",
                             "log_every", "cache"});
    read_opt(s, "tol", c.tol);
    read_opt(s, "loglik_tol", c.loglik_tol);
    read_opt(s, "max_iter", c.max_iter);
    read_opt(s, "support_threshold", c.support_threshold);
    read_opt(s, "restarts", c.restarts);
    read_opt(s, "log_every", c.log_every);
    read_opt(s, "cache", c.cache);
  }
  if (j.contains("analytics")) {
    const json& a = j["analytics"];
    check_keys(a, "analytics", {"ttp", "markups", "anova", "dominance", "figures", "ttp_reference"});
    read_opt(a, "ttp", c.analytics.ttp);
    read_opt(a, "markups", c.analytics.markups);
    read_opt(a, "dominance", c.analytics.dominance);
    read_opt(a, "figures", c.analytics.figures);
    if (a.contains("anova")) {
      c.analytics.anova.clear();
      if (a["anova"].is_boolean()) {
        if (a["anova"].get<bool>()) c.analytics.anova = AnalyticsToggles{}.anova;
      } else {
        for (const auto& name : get_as<std::vector<std::string>>(a, "anova"))
          c.analytics.anova.push_back(parse_grouping(name));
      }
    }
    if (a.contains("ttp_reference")) {
      check_keys(a["ttp_reference"], "analytics.ttp_reference", {"log_k0", "log_l0"});
      read_opt(a["ttp_reference"], "log_k0", c.ttp_reference.log_k0);
      read_opt(a["ttp_reference"], "log_l0", c.ttp_reference.log_l0);
    }
  }
  read_opt(j, "output_dir", c.output_dir);
  read_opt(j, "threads", c.threads);
  read_opt(j, "memory_budget_bytes", c.memory_budget_bytes);
  read_opt(j, "seed", c.seed);
  if (j.contains("simulation")) {
    const json& s = j["simulation"];
    check_keys(s, "simulation", {"firms", "periods", "replications", "target_corr", "within_sd_k",
                                 "within_sd_l", "sectors", "mean", "cov", "calibrated_grid"});
    SimulationConfig& sc = c.simulation;
    read_opt(s, "firms", sc.firms);
    read_opt(s, "periods", sc.periods);
    read_opt(s, "replications", sc.replications);
    read_opt(s, "target_corr", sc.target_corr);
    read_opt(s, "within_sd_k", sc.within_sd_k);
    read_opt(s, "within_sd_l", sc.within_sd_l);
    read_opt(s, "sectors", sc.sectors);
    read_opt(s, "mean", sc.mean);
    read_opt(s, "cov", sc.cov);
    read_opt(s, "calibrated_grid", sc.calibrated_grid);
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  RunConfig c = parse_config(j);
  // Relative input paths are taken relative to the config file.
  if (!c.input.empty() && fs::path(c.input).is_relative())
    c.input = (path.parent_path() / c.input).lexically_normal().string();
  return c;
}

json config_to_json(const RunConfig& c) {
  json j;
  json cols = {{"firm", c.columns.firm}, {"year", c.columns.year}, {"output", c.columns.output},
               {"capital", c.columns.capital}, {"labor", c.columns.labor}};
  if (c.columns.sector) cols["sector"] = *c.columns.sector;
  if (c.columns.wage_share) cols["wage_share"] = *c.columns.wage_share;
  if (c.columns.wage_bill) cols["wage_bill"] = *c.columns.wage_bill;
  if (c.columns.revenue) cols["revenue"] = *c.columns.revenue;
  j["input"] = {{"path", c.input}, {"columns", cols}, {"log_transform", c.load.log_transform}};
  if (c.load.year_min) j["input"]["year_min"] = *c.load.year_min;
  if (c.load.year_max) j["input"]["year_max"] = *c.load.year_max;
  if (c.trim) j["input"]["trim"] = {c.trim->first, c.trim->second};
  j["model"] = {{"family", family_name(c.family)}};
  json overrides = json::object();
  for (const auto& [name, o] : c.grid_overrides) {
    json ov = json::object();
    if (o.min) ov["min"] = *o.min;
    if (o.max) ov["max"] = *o.max;
    if (o.points) ov["points"] = *o.points;
    overrides[name] = ov;
  }
  j["grid"] = {{"points", c.grid_points}, {"overrides", overrides}};
  j["solver"] = {{"support_threshold", c.support_threshold}, {"restarts", c.restarts},
                 {"log_every", c.log_every}, {"cache", c.cache}};
  if (c.tol) j["solver"]["tol"] = *c.tol;
  if (c.loglik_tol) j["solver"]["loglik_tol"] = *c.loglik_tol;
  if (c.max_iter) j["solver"]["max_iter"] = *c.max_iter;
  json anova = json::array();
  for (AnovaGrouping g : c.analytics.anova) anova.push_back(grouping_name(g));
  j["analytics"] = {{"ttp", c.analytics.ttp}, {"markups", c.analytics.markups}, {"anova", anova},
                    {"dominance", c.analytics.dominance}, {"figures", c.analytics.figures},
                    {"ttp_reference", {{"log_k0", opt_json(c.ttp_reference.log_k0)},
                                       {"log_l0", opt_json(c.ttp_reference.log_l0)}}}};
  j["output_dir"] = c.output_dir;
  j["memory_budget_bytes"] = c.memory_budget_bytes;
  j["seed"] = c.seed;
  const SimulationConfig& s = c.simulation;
  j["simulation"] = {{"firms", s.firms}, {"periods", s.periods}, {"replications", s.replications},
                     {"target_corr", s.target_corr}, {"calibrated_grid", s.calibrated_grid}};
  if (s.within_sd_k) j["simulation"]["within_sd_k"] = *s.within_sd_k;
  if (s.within_sd_l) j["simulation"]["within_sd_l"] = *s.within_sd_l;
  if (s.sectors) j["simulation"]["sectors"] = *s.sectors;
  if (s.mean) j["simulation"]["mean"] = *s.mean;
  if (s.cov) j["simulation"]["cov"] = *s.cov;
  return j;
}

void apply_setting(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("setting must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("empty key segment in " + key);
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

// ---- logging and artifacts ------------------------------------------------

void log_event(const std::string& level, const std::string& event, json fields) {
  static std::mutex mu;
  const auto now = std::chrono::duration<double>(
      std::chrono::system_clock::now().time_since_epoch()).count();
  json line = {{"ts", now}, {"level", level}, {"event", event}};
  for (auto& [k, v] : fields.items()) line[k] = v;
  const std::string text = line.dump(-1, ' ', false, json::error_handler_t::replace);
  std::lock_guard lock(mu);
  std::cerr << text << '\n';
}

void with_staging_dir(const fs::path& target, const std::function<void(const fs::path&)>& body) {
  const fs::path parent = target.has_parent_path() ? target.parent_path() : fs::path(".");
  fs::create_directories(parent);
  const fs::path staging =
      parent / ("." + target.filename().string() + ".staging-" + std::to_string(::getpid()));
  fs::remove_all(staging);
  fs::create_directories(staging);
  try {
    body(staging);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  // Same filesystem, so each rename is atomic; files appear only after the
  // whole run succeeded.
  fs::create_directories(target);
  for (const auto& entry : fs::directory_iterator(staging))
    fs::rename(entry.path(), target / entry.path().filename());
  fs::remove_all(staging);
}

ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return ExitCode::kConfig;
  if (dynamic_cast<const DataError*>(&e)) return ExitCode::kData;
  if (dynamic_cast<const ConvergenceError*>(&e)) return ExitCode::kNonConvergence;
  return ExitCode::kInternal;
}

// ---- estimation -----------------------------------------------------------

PanelDataset load_config_panel(const RunConfig& config) {
  LoadedPanel loaded = load_panel(config.input, config.columns, config.load);
  log_event("info", "panel_loaded",
            {{"rows", loaded.report.rows_read}, {"firms_seen", loaded.report.firms_seen},
             {"firms_dropped", loaded.report.firms_dropped},
             {"firms_dropped_sector_change", loaded.report.firms_dropped_sector_change},
             {"firms", loaded.data.num_firms()}, {"periods", loaded.data.num_periods()}});
  PanelDataset data = std::move(loaded.data);
  if (config.trim) {
    data = quantile_trim(data, config.trim->first, config.trim->second);
    log_event("info", "panel_trimmed", {{"firms", data.num_firms()}});
  }
  if (config.family == ModelFamily::IntensiveCD) data = to_intensive(data);
  return data;
}

EstimateOutcome run_estimate(const RunConfig& config) {
  config.validate(true);
  set_num_threads(config.threads);
  const PanelDataset data = load_config_panel(config);
  const ModelSpec model = config_model(config, data);
  const GridSpec grid =
      apply_overrides(default_grid(model, data, config.grid_points), config.grid_overrides, model);
  const TypeTable table(model, grid);
  log_event("info", "grid", {{"num_types", table.size()}, {"axes", grid_json(grid)}});

  const ModelDensity model_density(model, data, table);
  std::optional<MatrixDensity> cached;
  if (!config.cache.empty()) {
    const CacheKey key = cache_key(model, grid, data);
    const double bytes = static_cast<double>(data.num_firms()) * static_cast<double>(table.size()) * 8.0;
    if (bytes > static_cast<double>(config.memory_budget_bytes)) {
      log_event("warn", "cache_skipped", {{"reason", "density matrix exceeds the memory budget"}});
    } else {
      if (fs::exists(config.cache)) {
        try {
          cached.emplace(read_density_cache(config.cache, key));
          log_event("info", "cache_hit", {{"path", config.cache}});
        } catch (const DataError& e) {
          log_event("warn", "cache_stale", {{"path", config.cache}, {"reason", e.what()}});
        }
      }
      if (!cached) {
        write_density_cache(model_density, key, config.cache);
        cached.emplace(read_density_cache(config.cache, key));
        log_event("info", "cache_written", {{"path", config.cache}});
      }
    }
  }
  const DensitySource& density = cached ? static_cast<const DensitySource&>(*cached)
                                        : static_cast<const DensitySource&>(model_density);

  const SolverOptions solver = estimation_solver(config);
  auto [pi, report] = fixed_point_iterate(density, uniform_mixing(table.size()), solver);
  log_event(report.converged ? "info" : "warn", "solver_done",
            {{"converged", report.converged}, {"iterations", report.iterations},
             {"loglik", pi.loglik}, {"delta", report.final_delta}});
  const double threshold = config.support_threshold > 0.0 ? config.support_threshold
                                                          : default_support_threshold(table.size());
  const MixingDistribution pruned = extract_support(pi, threshold);
  std::vector<double> restarts;
  if (config.restarts > 0) restarts = restart_logliks(density, config.restarts, config.seed, solver);

  const auto posteriors = firm_posteriors(density, pruned, table, data.firm_ids);
  const PopulationMoments mix = population_moments(pruned, table);
  const PopulationMoments pm = posterior_mean_moments(posteriors, model);

  with_staging_dir(config.output_dir, [&](const fs::path& dir) {
    write_json(dir / "config.json", config_to_json(config));
    write_pi_star_csv(pruned, table, (dir / "pi_star.csv").string());
    write_posteriors_csv(posteriors, model, (dir / "firm_posteriors.csv").string());
    write_json(dir / "moments.json", {{"mixture", moments_json(mix)}, {"posterior_means", moments_json(pm)}});
    write_dispersion_csv(dispersion_table(mix), "mixture", (dir / "dispersion_mixture.csv").string());
    write_dispersion_csv(dispersion_table(pm), "posterior_means",
                         (dir / "dispersion_posterior_means.csv").string());
    write_correlation_csv(mix, (dir / "correlation_mixture.csv").string());
    write_correlation_csv(pm, (dir / "correlation_posterior_means.csv").string());

    json rep = {{"model", {{"family", family_name(model.family())}, {"periods", model.periods()}}},
                {"firms", data.num_firms()},
                {"num_types", table.size()},
                {"grid", grid_json(grid)},
                {"converged", report.converged},
                {"iterations", report.iterations},
                {"final_delta", report.final_delta},
                {"loglik", pi.loglik},
                {"loglik_pruned", pruned.loglik},
                {"support_size", report.support_size},
                {"support_threshold", threshold},
                {"support_size_pruned", pruned.support.size()},
                {"materialized", report.materialized},
                {"tol", solver.tol},
                {"loglik_tol", solver.loglik_tol},
                {"max_iter", solver.max_iter},
                {"loglik_trace", report.loglik_trace}};
    if (!restarts.empty()) rep["restart_logliks"] = restarts;
    write_json(dir / "solver_report.json", rep);

    write_analytics(dir, posteriors, data, model, config, config.analytics.ttp,
                    config.analytics.markups, true, config.analytics.dominance);
    if (config.analytics.figures) write_figures(dir);
  });
  log_event("info", "artifacts_written", {{"output_dir", config.output_dir}});
  return {report.converged, report.iterations, pi.loglik, pruned.support.size()};
}

// ---- simulation -----------------------------------------------------------

DGPSpec simulation_dgp(const RunConfig& config) {
  const SimulationConfig& s = config.simulation;
  DGPSpec spec = calibrated_dgp(s.target_corr);
  spec.firms = s.firms;
  spec.periods = s.periods;
  spec.replications = s.replications;
  spec.seed = config.seed;
  if (s.within_sd_k) spec.within_sd_k = *s.within_sd_k;
  if (s.within_sd_l) spec.within_sd_l = *s.within_sd_l;
  if (s.sectors) spec.sectors = *s.sectors;
  if (s.mean)
    for (int r = 0; r < kDgpDim; ++r) spec.mean(r) = (*s.mean)[static_cast<std::size_t>(r)];
  if (s.cov)
    for (int r = 0; r < kDgpDim; ++r)
      for (int c = 0; c < kDgpDim; ++c) spec.cov(r, c) = (*s.cov)[static_cast<std::size_t>(r * kDgpDim + c)];
  if (!config.input.empty()) {
    PanelDataset inputs = load_panel(config.input, config.columns, config.load).data;
    spec.inputs = std::make_shared<const PanelDataset>(std::move(inputs));
  }
  spec.validate();
  return spec;
}

SimulationOptions simulation_options(const RunConfig& config) {
  SimulationOptions o = config.simulation.calibrated_grid ? calibrated_simulation_options()
                                                          : SimulationOptions{};
  if (!config.grid_points.empty()) o.grid.points = config.grid_points;
  for (const auto& [name, ov] : config.grid_overrides) {
    AxisOverride& dst = o.grid.overrides[name];
    if (ov.min) dst.min = ov.min;
    if (ov.max) dst.max = ov.max;
    if (ov.points) dst.points = ov.points;
  }
  if (config.tol) o.solver.tol = *config.tol;
  if (config.loglik_tol) o.solver.loglik_tol = *config.loglik_tol;
  if (config.max_iter) o.solver.max_iter = *config.max_iter;
  o.solver.memory_budget_bytes = config.memory_budget_bytes;
  o.support_threshold = config.support_threshold;
  o.on_replication = [](int b, int total) {
    log_event("info", "replication_done", {{"replication", b}, {"of", total}});
  };
  return o;
}

SimulationResult run_simulate(const RunConfig& config) {
  config.validate(false);
  if (!config.input.empty() && !fs::exists(config.input))
    throw ConfigError("input file does not exist: " + config.input);
  set_num_threads(config.threads);
  const DGPSpec spec = simulation_dgp(config);
  const SimulationOptions options = simulation_options(config);
  SimulationResult result = run_bias_mse(spec, options);
  with_staging_dir(config.output_dir, [&](const fs::path& dir) {
    write_json(dir / "config.json", config_to_json(config));
    write_simulation_csv(result, (dir / "replications.csv").string(), (dir / "bias_mse.csv").string());
    json summary = {{"replications", spec.replications},
                    {"failed", result.failed},
                    {"firms", spec.firms},
                    {"periods", spec.periods},
                    {"columns", {"alpha", "beta", "gamma"}},
                    {"bias_mean", result.bias_mean},
                    {"mse_mean", result.mse_mean},
                    {"bias_sd", result.bias_sd},
                    {"mse_sd", result.mse_sd},
                    {"error_convention", "truth minus estimate"}};
    write_json(dir / "simulation.json", summary);
  });
  log_event(result.failed ? "warn" : "info", "simulation_done", {{"failed", result.failed}});
  return result;
}

// ---- other subcommands ----------------------------------------------------

json describe_grid(const RunConfig& config) {
  config.validate(true);
  const PanelDataset data = load_config_panel(config);
  const ModelSpec model = config_model(config, data);
  const GridSpec grid =
      apply_overrides(default_grid(model, data, config.grid_points), config.grid_overrides, model);
  const double dense = static_cast<double>(data.num_firms()) * static_cast<double>(grid.num_types()) * 8.0;
  return {{"family", family_name(model.family())},
          {"periods", model.periods()},
          {"firms", data.num_firms()},
          {"num_types", grid.num_types()},
          {"axes", grid_json(grid)},
          {"dense_matrix_bytes", dense},
          {"materialized", dense <= static_cast<double>(config.memory_budget_bytes)}};
}

void run_analytics(const RunConfig& config, const fs::path& run_dir, bool ttp, bool markups,
                   bool anova) {
  config.validate(true);
  set_num_threads(config.threads);
  const PanelDataset data = load_config_panel(config);
  const ModelSpec model = config_model(config, data);
  const fs::path source = run_dir / "firm_posteriors.csv";
  if (!fs::exists(source)) throw ConfigError("no firm_posteriors.csv in " + run_dir.string());
  const auto posteriors = read_posteriors_csv(source.string(), model);
  if (posteriors.size() != data.num_firms())
    throw DataError("firm_posteriors.csv does not match the panel firms");
  for (std::size_t i = 0; i < posteriors.size(); ++i)
    if (posteriors[i].firm_id != data.firm_ids[i])
      throw DataError("firm_posteriors.csv does not match the panel firms");
  with_staging_dir(config.output_dir, [&](const fs::path& dir) {
    write_analytics(dir, posteriors, data, model, config, ttp, markups, anova, false);
  });
}

void run_ols_baseline(const RunConfig& config) {
  config.validate(true);
  set_num_threads(config.threads);
  const PanelDataset data = load_config_panel(config);
  const ModelSpec model = config_model(config, data);
  const auto firms = per_firm_ols(data, model);
  const FirmOLSEstimate pooled = pooled_ols(data, model);
  const auto names = ols_coefficient_names(model);
  std::ostringstream os;
  os << "coefficient,pooled,firms_used,mean,sd,p10,p50,p90\n";
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<double> v;
    for (const auto& f : firms)
      if (f.rank_ok) v.push_back(f.coefficients[j]);
    os << names[j] << ',' << (pooled.rank_ok ? format_double(pooled.coefficients[j]) : "nan") << ','
       << v.size();
    if (v.empty()) {
      os << ",nan,nan,nan,nan,nan\n";
      continue;
    }
    os << ',' << format_double(mean(v)) << ',' << format_double(sd(v)) << ','
       << format_double(sample_quantile(v, 0.1)) << ',' << format_double(sample_quantile(v, 0.5))
       << ',' << format_double(sample_quantile(v, 0.9)) << '\n';
  }
  with_staging_dir(config.output_dir, [&](const fs::path& dir) {
    write_ols_csv(firms, model, (dir / "ols_firms.csv").string());
    write_text_file(dir / "ols_summary.csv", os.str());
  });
}

void write_figures(const fs::path& run_dir) {
  const fs::path report = run_dir / "solver_report.json";
  if (!fs::exists(report)) throw ConfigError("no solver_report.json in " + run_dir.string());
  json rep;
  {
    std::ifstream in(report);
    try {
      rep = json::parse(in);
    } catch (const json::parse_error& e) {
      throw DataError("solver_report.json is not valid JSON: " + std::string(e.what()));
    }
  }
  const ModelSpec model(parse_family(rep.at("model").at("family").get<std::string>()),
                        rep.at("model").at("periods").get<int>());
  const auto names = moment_columns(model);

  // Mixture: derived columns recomputed from the grid values of each atom.
  const DelimitedTable pi = read_delimited(run_dir / "pi_star.csv");
  std::vector<std::vector<double>> mix(names.size());
  const std::vector<double> weights = column_of(pi, "weight");
  {
    std::vector<std::vector<double>> params;
    for (const auto& n : model.param_names()) params.push_back(column_of(pi, n));
    for (std::size_t r = 0; r < pi.rows.size(); ++r) {
      ParamVector p(model.num_params());
      for (std::size_t d = 0; d < p.size(); ++d) p[d] = params[d][r];
      std::size_t c = 0;
      for (; c < p.size(); ++c) mix[c].push_back(p[c]);
      if (model.has_dynamics()) mix[c++].push_back(time_avg_intercept(model, p));
      mix[c].push_back(returns_to_scale(model, p));
    }
  }
  const auto posteriors = read_posteriors_csv((run_dir / "firm_posteriors.csv").string(), model);
  const auto cols = posterior_columns(posteriors);
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::string svg = svg_histogram(
        {{"mixture", mix[c], weights}, {"posterior means", cols[c], {}}}, names[c]);
    write_text_file(run_dir / ("hist_" + names[c] + ".svg"), svg);
  }
  if (fs::exists(run_dir / "ttp.csv")) {
    const DelimitedTable t = read_delimited(run_dir / "ttp.csv");
    write_text_file(run_dir / "hist_ttp_tfp.svg",
                    svg_histogram({{"ln TTP", centered_at_median(column_of(t, "ln_ttp")), {}},
                                   {"ln TFP", centered_at_median(column_of(t, "ln_tfp")), {}}},
                                  "ln TTP and ln TFP, centered at medians"));
  }
  if (fs::exists(run_dir / "markups.csv")) {
    const DelimitedTable t = read_delimited(run_dir / "markups.csv");
    write_text_file(run_dir / "hist_markups.svg",
                    svg_histogram({{"markup", column_of(t, "markup"), {}}}, "labor markups"));
  }
}

}  // namespace hetprod
