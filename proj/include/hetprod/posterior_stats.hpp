#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetprod/eb_solver.hpp"
#include "hetprod/likelihood.hpp"
#include "hetprod/model_family.hpp"
#include "hetprod/param_grid.hpp"

namespace hetprod {

/// Summary columns: the model parameters, then "alpha_bar" (dynamic
/// families only) and "scale" (returns to scale).
std::vector<std::string> moment_columns(const ModelSpec& model);

/// Values of the summary columns for grid type q.
std::vector<double> type_columns(const TypeTable& table, std::uint64_t q);

struct FirmPosterior {
  std::string firm_id;
  ParamVector expected_params;
  std::vector<double> posterior_sd;
  std::uint64_t top_type = 0;
  // Posterior means and SDs of the derived quantities. For the intensive
  // family alpha_bar is the intercept a.
  double alpha_bar = 0.0;
  double alpha_bar_sd = 0.0;
  double scale = 0.0;
  double scale_sd = 0.0;

  // Posterior means in moment_columns order.
  std::vector<double> columns;
};

std::vector<FirmPosterior> firm_posteriors(const DensitySource& source,
                                           const MixingDistribution& pi,
                                           const TypeTable& table,
                                           const std::vector<std::string>& firm_ids);

/// Column-wise view of posterior means, one vector per moment column.
std::vector<std::vector<double>> posterior_columns(const std::vector<FirmPosterior>& posteriors);

struct PopulationMoments {
  std::string source;  // "mixture" or "posterior_means"
  std::vector<std::string> columns;
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<double> p10;
  std::vector<double> p50;
  std::vector<double> p90;
  // Pearson correlations; a pair involving a constant column is reported
  // as 0 off the diagonal.
  Eigen::MatrixXd correlation;

  std::size_t index(std::string_view column) const;
};

/// Moments of the discrete distribution pi over grid values. Quantiles use
/// the lower weighted quantile.
PopulationMoments population_moments(const MixingDistribution& pi, const TypeTable& table);

/// Moments across firms of the posterior means, each firm weighted equally.
/// Quantiles average the two order statistics at exact hits.
PopulationMoments posterior_mean_moments(const std::vector<FirmPosterior>& posteriors,
                                         const ModelSpec& model);

struct DispersionRow {
  std::string column;
  double median = 0.0;
  double sd = 0.0;
  double p90_p10 = 0.0;
  bool flagged = false;  // P10 <= 0, ratio not meaningful
};

/// Median, SD and P90/P10. Intercept columns use the ratio of exp
/// quantiles, exp(P90 - P10); other columns the raw ratio.
std::vector<DispersionRow> dispersion_table(const PopulationMoments& moments);

bool is_intercept_column(std::string_view column);

void write_posteriors_csv(const std::vector<FirmPosterior>& posteriors,
                          const ModelSpec& model, const std::string& path);
/// Inverse of write_posteriors_csv; derived columns are re-read, not recomputed.
std::vector<FirmPosterior> read_posteriors_csv(const std::string& path, const ModelSpec& model);
void write_pi_star_csv(const MixingDistribution& pi, const TypeTable& table,
                       const std::string& path);
void write_dispersion_csv(const std::vector<DispersionRow>& rows, const std::string& label,
                          const std::string& path);
void write_correlation_csv(const PopulationMoments& moments, const std::string& path);

struct HistogramSeries {
  std::string label;
  std::vector<double> values;
  std::vector<double> weights;  // empty = equal weights
};

inline constexpr int kHistogramBins = 30;

/// Standalone SVG with one 30-bin histogram per series on a shared axis,
/// bar heights in shares of the series mass.
std::string svg_histogram(const std::vector<HistogramSeries>& series, const std::string& title);

}  // namespace hetprod
