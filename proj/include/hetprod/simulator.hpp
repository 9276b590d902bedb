#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetprod/eb_solver.hpp"
#include "hetprod/model_family.hpp"
#include "hetprod/panel_data.hpp"
#include "hetprod/param_grid.hpp"

namespace hetprod {

/// Order of the joint Gaussian law: firm parameters, then firm-mean inputs.
enum DgpIndex : int { kDgpAlpha, kDgpBeta, kDgpGamma, kDgpSigma, kDgpKbar, kDgpLbar, kDgpDim };

using DgpVector = Eigen::Matrix<double, kDgpDim, 1>;
using DgpMatrix = Eigen::Matrix<double, kDgpDim, kDgpDim>;

/// Heterogeneous Cobb-Douglas DGP y_it = alpha_i + beta_i k_it + gamma_i l_it
/// + sigma_i e_it with alpha1 = alpha2 = 0.
struct DGPSpec {
  std::size_t firms = 500;
  int periods = 7;
  DgpVector mean = DgpVector::Zero();
  DgpMatrix cov = DgpMatrix::Zero();
  // Synthetic inputs: k_it = kbar_i + within_sd_k z, l_it likewise.
  double within_sd_k = 0.25;
  double within_sd_l = 0.25;
  // When set, (k, l) and sector codes come from the first `firms` firms of
  // this panel and kbar, lbar are their observed means.
  std::shared_ptr<const PanelDataset> inputs;
  int sectors = 10;  // synthetic sector codes S01.. (0 = none)
  double min_elasticity = 0.0;
  double min_sigma = kMinNoiseSd;
  int replications = 20;
  std::uint64_t seed = 1;

  // Throws ConfigError on invalid sizes or a covariance that is not
  // symmetric positive semidefinite.
  void validate() const;
};

/// Means near published Japanese magnitudes, correlation of alpha with
/// beta + gamma set to `target_corr`, lognormal synthetic inputs.
DGPSpec calibrated_dgp(double target_corr = -0.8);

/// Correlation between alpha and beta that gives corr(alpha, beta + gamma)
/// = target when the other correlations and SDs are held fixed.
double alpha_beta_corr_for_target(double target, double sd_beta, double sd_gamma,
                                  double corr_alpha_gamma, double corr_beta_gamma);

struct TrueParameters {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> gamma;
  std::vector<double> sigma;
  std::size_t clamped_draws = 0;  // firms with any parameter moved to a bound
};

struct Replication {
  PanelDataset data;
  TrueParameters truth;
};

/// Deterministic in (seed, b); each draw is addressed by (b, firm, index).
Replication generate_replication(const DGPSpec& spec, int b);

/// Panel with every firm's parameters on grid nodes: type q_i drawn
/// uniformly from the table (with the noise node forced to the smallest s
/// when `s_at_minimum`), synthetic inputs, and
/// y = mean_output + noise_scale * s_i * e. Returns the true type per firm.
struct GridReplication {
  PanelDataset data;
  std::vector<std::uint64_t> true_types;
};
GridReplication generate_grid_replication(const TypeTable& table, std::size_t firms,
                                          std::uint64_t seed, double noise_scale = 0.0,
                                          bool s_at_minimum = true, double kbar = 8.0,
                                          double lbar = 4.0, double input_sd = 0.5);

struct SimulationGrid {
  std::vector<int> points;  // per axis; empty = family defaults
  std::map<std::string, AxisOverride> overrides;
};

struct SimulationOptions {
  SimulationGrid grid;
  SolverOptions solver;
  double support_threshold = 0.0;  // 0 = default_support_threshold(Q)
  std::function<void(int, int)> on_replication;  // (b, replications)
};

/// Grid and solver settings used with calibrated_dgp: a 4-D grid over
/// (alpha0, beta, gamma, s) with the trend axes pinned at zero (Q = 50,000)
/// and tolerances of 1e-5 on weights and log-likelihood.
SimulationOptions calibrated_simulation_options();

inline constexpr std::array<const char*, 3> kSimColumns{"alpha", "beta", "gamma"};

struct ReplicationSummary {
  int replication = 0;
  bool converged = false;
  int iterations = 0;
  double loglik = 0.0;
  std::uint64_t num_types = 0;
  std::size_t support_size = 0;
  std::size_t clamped_draws = 0;
  std::array<double, 3> true_mean{};
  std::array<double, 3> true_sd{};
  std::array<double, 3> est_mean{};  // average of firm posterior means
  std::array<double, 3> est_sd{};    // SD of firm posterior means
  std::array<double, 3> mixture_sd{};
  double true_corr_alpha_scale = 0.0;
  double est_corr_alpha_scale = 0.0;
  double mixture_corr_alpha_scale = 0.0;
  double sd_ln_ttp = 0.0;
  double sd_ln_tfp = 0.0;
};

struct SimulationResult {
  std::vector<ReplicationSummary> replications;
  int failed = 0;  // not converged; excluded from aggregates
  // Errors are truth - estimate, so a positive SD bias is underestimation.
  std::array<double, 3> bias_mean{};
  std::array<double, 3> mse_mean{};
  std::array<double, 3> bias_sd{};
  std::array<double, 3> mse_sd{};
};

/// Aggregates bias (mean error) and MSE (mean squared error) over the
/// converged replications.
void aggregate_errors(SimulationResult& result);

ReplicationSummary estimate_replication(const DGPSpec& spec, int b,
                                        const SimulationOptions& options);

SimulationResult run_bias_mse(const DGPSpec& spec, const SimulationOptions& options);

void write_simulation_csv(const SimulationResult& result, const std::string& replications_path,
                          const std::string& bias_path);

}  // namespace hetprod
