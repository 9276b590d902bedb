#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "hetprod/likelihood.hpp"

namespace hetprod {

/// Probability vector over the Q grid types.
struct MixingDistribution {
  std::vector<double> weights;
  std::vector<std::uint64_t> support;  // indices with positive weight
  double loglik = 0.0;                 // sum_i ln(sum_q pi_q f_iq)
};

MixingDistribution uniform_mixing(std::uint64_t num_types);

struct IterationInfo {
  int iteration = 0;
  double loglik = 0.0;
  double delta = 0.0;
};

struct SolverOptions {
  double tol = 1e-9;          // max-norm change of the weights
  double loglik_tol = 1e-10;  // absolute log-likelihood improvement
  int max_iter = 20000;
  // Above this size the scaled density matrix is not kept in memory and
  // rows are recomputed on every pass.
  std::size_t memory_budget_bytes = std::size_t{2} << 30;
  int log_every = 0;  // progress callback cadence, 0 = never
  std::function<void(const IterationInfo&)> progress;
};

struct SolverReport {
  int iterations = 0;
  std::vector<double> loglik_trace;  // entry n is the log-likelihood of iterate n
  double final_delta = 0.0;
  std::size_t support_size = 0;
  bool converged = false;
  bool materialized = false;
};

/// Posterior type probabilities of one firm: h_q proportional to
/// f_q * pi_q, computed by max-shifted exponentiation in log space. Types
/// with zero prior weight get exactly zero. Throws DataError when no type
/// with positive weight has finite density.
std::vector<double> posterior_row(std::span<const double> log_f_row,
                                  std::span<const double> weights);

/// Log-likelihood sum_i ln(sum_q w_q f_iq) of a weight vector.
double log_likelihood(const DensitySource& source, std::span<const double> weights,
                      std::size_t memory_budget_bytes = std::size_t{2} << 30);

/// Fixed-point iteration pi <- column mean of H(F, pi) from pi0. Stops when
/// both the max-norm weight change is at most `tol` and the log-likelihood
/// gain is at most `loglik_tol`, or after `max_iter` updates. Zero weights
/// stay zero.
std::pair<MixingDistribution, SolverReport> fixed_point_iterate(
    const DensitySource& source, const MixingDistribution& pi0,
    const SolverOptions& options = {});

/// Zeroes weights below `threshold` and renormalizes. Threshold must lie in
/// (0, 1/Q].
MixingDistribution extract_support(const MixingDistribution& pi, double threshold);

/// Default pruning threshold, 1e-10 / Q.
double default_support_threshold(std::uint64_t num_types);

/// Diagnostic: reruns the iteration from `restarts` random Dirichlet(1)
/// starting points and returns the final log-likelihood of each run.
std::vector<double> restart_logliks(const DensitySource& source, int restarts,
                                    std::uint64_t seed, const SolverOptions& options);

}  // namespace hetprod
