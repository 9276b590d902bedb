#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetprod/model_family.hpp"
#include "hetprod/panel_data.hpp"

namespace hetprod {

// Relative singular value threshold below which a design is rank deficient.
inline constexpr double kRankTolerance = 1e-8;

struct LeastSquaresFit {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd residuals;
  double rss = 0.0;
  bool rank_ok = false;
};

/// Orthogonalization-based least squares with an SVD rank check.
LeastSquaresFit least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Regressor names of the per-firm baseline: (alpha0, alpha1, alpha2, beta,
/// gamma) for the CD and CES families, (a, b) for the intensive family.
std::vector<std::string> ols_coefficient_names(const ModelSpec& model);

/// Design rows for firm i: (1, t, t^2, k, l) or (1, k).
Eigen::MatrixXd ols_design(const PanelDataset& data, const ModelSpec& model,
                           std::size_t firm);

struct FirmOLSEstimate {
  std::string firm_id;
  std::vector<double> coefficients;  // empty unless rank_ok
  double residual_sd = 0.0;
  bool rank_ok = false;
};

/// Separate least-squares fit for every firm. Rank-deficient firms are
/// flagged. Throws ConfigError when T <= number of regressors.
std::vector<FirmOLSEstimate> per_firm_ols(const PanelDataset& data,
                                          const ModelSpec& model);

/// The same regression on all observations stacked as a single firm.
FirmOLSEstimate pooled_ols(const PanelDataset& data, const ModelSpec& model);

void write_ols_csv(const std::vector<FirmOLSEstimate>& estimates,
                   const ModelSpec& model, const std::string& path);

}  // namespace hetprod
