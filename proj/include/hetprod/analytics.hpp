#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hetprod/model_family.hpp"
#include "hetprod/panel_data.hpp"
#include "hetprod/posterior_stats.hpp"

namespace hetprod {

// ---- Total technology productivity -------------------------------------

struct TTPRecord {
  std::string firm_id;
  std::string sector;
  double ln_ttp = 0.0;
  double ln_tfp = 0.0;  // alpha_bar
  double scale = 0.0;
};

/// Reference inputs in logs. Unset means the sector medians of the pooled
/// firm-period log capital and log labor.
struct TTPReference {
  std::optional<double> log_k0;
  std::optional<double> log_l0;
};

struct TTPGroupSummary {
  std::string sector;  // "pooled" or a sector code
  std::size_t firms = 0;
  double log_k0 = 0.0;
  double log_l0 = 0.0;
  double ttp_p90_p10 = 0.0;  // of exp(ln TTP)
  double tfp_p90_p10 = 0.0;  // of exp(alpha_bar)
  double sd_ln_ttp = 0.0;
  double sd_ln_tfp = 0.0;
};

struct TTPResult {
  std::vector<TTPRecord> records;
  std::vector<TTPGroupSummary> sectors;
  TTPGroupSummary pooled;
  double mean_sector_ttp_p90_p10 = 0.0;
  double mean_sector_tfp_p90_p10 = 0.0;
};

/// ln TTP_i = alpha_bar_i + beta_i ln K0 + gamma_i ln L0 (CD). For CES the
/// posterior-mean parameters are plugged into
/// alpha_bar + nu (sigma/(sigma-1)) ln(omega K0^rho + (1-omega) L0^rho).
/// Throws ConfigError for the intensive family and DataError when sector
/// medians are requested without sector codes.
TTPResult compute_ttp(const std::vector<FirmPosterior>& posteriors, const PanelDataset& data,
                      const ModelSpec& model, const TTPReference& reference = {});

void write_ttp_csv(const TTPResult& result, const std::string& records_path,
                   const std::string& summary_path);

// ---- Labor markups ------------------------------------------------------

struct MarkupRecord {
  std::string firm_id;
  int t = 0;
  double markup = 0.0;
};

struct MarkupSummary {
  std::size_t observations = 0;
  double mean = 0.0;
  double sd = 0.0;
  double p50 = 0.0;
  double p90_p50 = 0.0;
  double p90_p10 = 0.0;
};

struct MarkupResult {
  std::vector<MarkupRecord> records;
  MarkupSummary summary;
};

/// markup_it = labor elasticity of firm i at (k_it, l_it) / wage_share_it,
/// with the elasticity from the posterior-mean parameters (gamma_i for CD).
MarkupResult compute_markups(const std::vector<FirmPosterior>& posteriors,
                             const PanelDataset& data, const ModelSpec& model);

MarkupSummary summarize_markups(const std::vector<double>& markups);

void write_markups_csv(const MarkupResult& result, const std::string& records_path,
                       const std::string& summary_path);

// ---- Variance decomposition ---------------------------------------------

enum class AnovaGrouping {
  Sector,           // sector dummies
  SectorSize,       // sector + deciles of mean y, mean k, mean l (additive)
  SectorSizeJoint,  // sector x decile(y) x decile(k) x decile(l) cells
};

AnovaGrouping parse_grouping(std::string_view name);
std::string grouping_name(AnovaGrouping grouping);

struct AnovaRow {
  std::string column;
  double explained_share = 0.0;
  int degrees_of_freedom = 0;  // rank of the group design minus one
};

struct AnovaResult {
  AnovaGrouping grouping = AnovaGrouping::Sector;
  std::vector<AnovaRow> rows;
  std::size_t empty_levels_dropped = 0;
};

/// Decile (0..9) of each value: the number of the type-2 empirical deciles
/// lying strictly below it.
std::vector<int> decile_groups(std::span<const double> values);

/// Columns decomposed: alpha_bar and the elasticity parameters.
std::vector<std::string> anova_columns(const ModelSpec& model);

/// R^2 of the least-squares projection of `values` onto dummies of the given
/// categorical factors (plus an intercept).
double explained_share(std::span<const double> values,
                       const std::vector<std::vector<int>>& factors, int* dof = nullptr);

AnovaResult anova_decomposition(const std::vector<FirmPosterior>& posteriors,
                                const PanelDataset& data, const ModelSpec& model,
                                AnovaGrouping grouping);

void write_anova_csv(const std::vector<AnovaResult>& results, const std::string& path);

// ---- Non-dominance --------------------------------------------------------

struct DominanceResult {
  std::size_t firms = 0;
  std::uint64_t pairs = 0;
  std::uint64_t violating_pairs = 0;  // (a_i-a_j)(b_i-b_j) > 0; ties do not violate
  double violating_share = 0.0;
  double correlation = 0.0;
  bool exact_checked = false;  // pair enumeration cross-check ran (I <= 2000)
};

inline constexpr std::size_t kExactDominanceLimit = 2000;

/// Counts concordant pairs with a Fenwick tree in O(I log I).
std::uint64_t count_concordant_pairs(std::span<const double> a, std::span<const double> b);

DominanceResult dominance_diagnostic(std::span<const double> alpha_bar,
                                     std::span<const double> scale);
DominanceResult dominance_diagnostic(const std::vector<FirmPosterior>& posteriors);

void write_dominance_csv(const DominanceResult& result, const std::string& path);

}  // namespace hetprod
