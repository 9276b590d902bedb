#include "hetprod/eb_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hetprod/errors.hpp"
#include "hetprod/random.hpp"

namespace hetprod {

namespace {

constexpr std::size_t kTypeChunk = 2048;
constexpr std::size_t kFirmChunk = 32;
constexpr std::size_t kCacheBytes = std::size_t{1} << 20;

// Fixed 8-way accumulation order, independent of threading.
double dot(const double* a, const double* b, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8)
    for (std::size_t u = 0; u < 8; ++u) acc[u] += a[j + u] * b[j + u];
  for (std::size_t u = 0; j < n; ++j, ++u) acc[u] += a[j] * b[j];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// Rows of F scaled by their maxima: F~_iq = exp(log f_iq - m_i). Either held
// in memory or recomputed chunk by chunk on every pass.
class ScaledDensity {
 public:
  ScaledDensity(const DensitySource& source, std::size_t memory_budget_bytes)
      : source_(source),
        firms_(source.num_firms()),
        types_(static_cast<std::size_t>(source.num_types())),
        offset_(firms_, 0.0),
        inv_d_(firms_, 0.0) {
    if (firms_ == 0 || types_ == 0) throw ConfigError("empty density source");
    const double bytes = static_cast<double>(firms_) * static_cast<double>(types_) * 8.0;
    materialized_ = bytes <= static_cast<double>(memory_budget_bytes);
    if (materialized_) {
      rows_.resize(firms_ * types_);
      build_rows(0, firms_, rows_.data());
      chunk_ = std::max<std::size_t>(1, kCacheBytes / (types_ * 8));
    } else {
      chunk_ = std::clamp<std::size_t>(memory_budget_bytes / (types_ * 8), 1, kFirmChunk);
      rows_.resize(chunk_ * types_);
    }
  }

  bool materialized() const { return materialized_; }
  std::size_t firms() const { return firms_; }
  std::size_t types() const { return types_; }

  // Log-likelihood of `w`; when `acc` is given also sets
  // acc_q = sum_i F~_iq / d_i with d_i = sum_q F~_iq w_q.
  double pass(std::span<const double> w, std::vector<double>* acc) {
    if (acc) acc->assign(types_, 0.0);
    // Firm chunks keep the rows read by the accumulation pass in cache right
    // after the denominators used them.
    for (std::size_t f0 = 0; f0 < firms_; f0 += chunk_) {
      const std::size_t f1 = std::min(firms_, f0 + chunk_);
      const double* rows = rows_.data();
      if (materialized_) {
        rows += f0 * types_;
      } else {
        build_rows(f0, f1, rows_.data());
      }
      denominators(f0, f1, rows, w);
      if (acc) accumulate(f0, f1, rows, *acc);
    }
    double loglik = 0.0;
    for (std::size_t i = 0; i < firms_; ++i) loglik += offset_[i] - std::log(inv_d_[i]);
    return loglik;
  }

 private:
  void build_rows(std::size_t f0, std::size_t f1, double* out) {
    const auto n = static_cast<long long>(f1 - f0);
    bool bad = false;
#pragma omp parallel for schedule(static)
    for (long long r = 0; r < n; ++r) {
      const std::size_t i = f0 + static_cast<std::size_t>(r);
      double* row = out + static_cast<std::size_t>(r) * types_;
      source_.fill_row(i, 0, types_, std::span<double>(row, types_));
      const double m = *std::max_element(row, row + types_);
      if (!std::isfinite(m)) {
#pragma omp atomic write
        bad = true;
        continue;
      }
      for (std::size_t q = 0; q < types_; ++q) row[q] = std::exp(row[q] - m);
      offset_[i] = m;
    }
    if (bad) throw DataError("a firm has no finite density on the grid; check grid ranges");
  }

  void denominators(std::size_t f0, std::size_t f1, const double* rows,
                    std::span<const double> w) {
    const auto n = static_cast<long long>(f1 - f0);
    bool bad = false;
#pragma omp parallel for schedule(static)
    for (long long r = 0; r < n; ++r) {
      const double d = dot(rows + static_cast<std::size_t>(r) * types_, w.data(), types_);
      if (!(d > 0.0) || !std::isfinite(d)) {
#pragma omp atomic write
        bad = true;
        continue;
      }
      inv_d_[f0 + static_cast<std::size_t>(r)] = 1.0 / d;
    }
    if (bad)
      throw DataError("a firm has zero likelihood under the current weights; check grid ranges");
  }

  // Per type, firms are added in ascending order whatever the thread count.
  void accumulate(std::size_t f0, std::size_t f1, const double* rows,
                  std::vector<double>& acc) const {
    const auto chunks = static_cast<long long>((types_ + kTypeChunk - 1) / kTypeChunk);
#pragma omp parallel for schedule(static)
    for (long long c = 0; c < chunks; ++c) {
      const std::size_t q0 = static_cast<std::size_t>(c) * kTypeChunk;
      const std::size_t q1 = std::min(types_, q0 + kTypeChunk);
      double* a = acc.data();
      for (std::size_t i = f0; i < f1; ++i) {
        const double* row = rows + (i - f0) * types_;
        const double s = inv_d_[i];
        for (std::size_t q = q0; q < q1; ++q) a[q] += row[q] * s;
      }
    }
  }

  const DensitySource& source_;
  std::size_t firms_;
  std::size_t types_;
  bool materialized_ = false;
  std::size_t chunk_ = 0;
  std::vector<double> rows_;
  std::vector<double> offset_;
  std::vector<double> inv_d_;
};

void check_simplex(std::span<const double> w, std::uint64_t types) {
  if (w.size() != types) throw ConfigError("mixing weights do not match the type count");
  double sum = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("mixing weights must be nonnegative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("mixing weights must sum to one");
}

std::vector<std::uint64_t> positive_indices(std::span<const double> w) {
  std::vector<std::uint64_t> out;
  for (std::size_t q = 0; q < w.size(); ++q)
    if (w[q] > 0.0) out.push_back(q);
  return out;
}

}  // namespace

MixingDistribution uniform_mixing(std::uint64_t num_types) {
  if (num_types == 0) throw ConfigError("no types");
  MixingDistribution pi;
  pi.weights.assign(static_cast<std::size_t>(num_types), 1.0 / static_cast<double>(num_types));
  pi.support = positive_indices(pi.weights);
  pi.loglik = std::nan("");
  return pi;
}

std::vector<double> posterior_row(std::span<const double> log_f_row,
                                  std::span<const double> weights) {
  if (log_f_row.size() != weights.size())
    throw std::invalid_argument("posterior_row: size mismatch");
  std::vector<double> h(weights.size(), 0.0);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < weights.size(); ++q)
    if (weights[q] > 0.0) m = std::max(m, log_f_row[q] + std::log(weights[q]));
  if (!std::isfinite(m))
    throw DataError("firm has zero likelihood on every weighted type; check grid ranges");
  double sum = 0.0;
  for (std::size_t q = 0; q < weights.size(); ++q) {
    if (weights[q] > 0.0) {
      h[q] = std::exp(log_f_row[q] + std::log(weights[q]) - m);
      sum += h[q];
    }
  }
  for (double& v : h) v /= sum;
  return h;
}

double log_likelihood(const DensitySource& source, std::span<const double> weights,
                      std::size_t memory_budget_bytes) {
  check_simplex(weights, source.num_types());
  ScaledDensity scaled(source, memory_budget_bytes);
  return scaled.pass(weights, nullptr);
}

std::pair<MixingDistribution, SolverReport> fixed_point_iterate(
    const DensitySource& source, const MixingDistribution& pi0,
    const SolverOptions& options) {
  if (!(options.tol > 0.0)) throw ConfigError("solver tolerance must be positive");
  if (!(options.loglik_tol >= 0.0)) throw ConfigError("log-likelihood tolerance must be >= 0");
  if (options.max_iter < 1) throw ConfigError("max_iter must be at least 1");
  check_simplex(pi0.weights, source.num_types());

  ScaledDensity scaled(source, options.memory_budget_bytes);
  const double inv_firms = 1.0 / static_cast<double>(scaled.firms());
  SolverReport report;
  report.materialized = scaled.materialized();
  std::vector<double> w = pi0.weights;
  std::vector<double> next(w.size());
  std::vector<double> acc;

  double loglik = scaled.pass(w, &acc);
  if (!std::isfinite(loglik)) throw DataError("non-finite log-likelihood at the start");
  report.loglik_trace.push_back(loglik);

  for (int n = 1; n <= options.max_iter; ++n) {
    double sum = 0.0;
    for (std::size_t q = 0; q < w.size(); ++q) {
      next[q] = w[q] * acc[q] * inv_firms;
      sum += next[q];
    }
    double delta = 0.0;
    for (std::size_t q = 0; q < w.size(); ++q) {
      next[q] /= sum;
      delta = std::max(delta, std::abs(next[q] - w[q]));
    }
    w.swap(next);
    const double updated = scaled.pass(w, &acc);
    if (!std::isfinite(updated))
      throw DataError("non-finite log-likelihood at iteration " + std::to_string(n));
    const double gain = updated - loglik;
    loglik = updated;
    report.loglik_trace.push_back(loglik);
    report.iterations = n;
    report.final_delta = delta;
    if (options.progress && options.log_every > 0 && n % options.log_every == 0)
      options.progress({n, loglik, delta});
    if (delta <= options.tol && gain <= options.loglik_tol) {
      report.converged = true;
      break;
    }
  }

  MixingDistribution pi;
  pi.weights = std::move(w);
  pi.support = positive_indices(pi.weights);
  pi.loglik = loglik;
  report.support_size = pi.support.size();
  return {std::move(pi), std::move(report)};
}

double default_support_threshold(std::uint64_t num_types) {
  return 1e-10 / static_cast<double>(num_types);
}

MixingDistribution extract_support(const MixingDistribution& pi, double threshold) {
  const auto q = static_cast<double>(pi.weights.size());
  if (pi.weights.empty() || !(threshold > 0.0) || threshold > 1.0 / q)
    throw ConfigError("support threshold must lie in (0, 1/Q]");
  MixingDistribution out;
  out.weights.assign(pi.weights.size(), 0.0);
  double sum = 0.0;
  for (std::size_t j = 0; j < pi.weights.size(); ++j) {
    if (pi.weights[j] >= threshold) {
      out.weights[j] = pi.weights[j];
      sum += pi.weights[j];
    }
  }
  if (!(sum > 0.0)) throw ConvergenceError("every weight is below the support threshold");
  for (double& v : out.weights) v /= sum;
  out.support = positive_indices(out.weights);
  out.loglik = pi.loglik;
  return out;
}

std::vector<double> restart_logliks(const DensitySource& source, int restarts,
                                    std::uint64_t seed, const SolverOptions& options) {
  const KeyedRandom rng(seed);
  std::vector<double> out;
  const std::uint64_t types = source.num_types();
  for (int r = 0; r < restarts; ++r) {
    MixingDistribution start;
    start.weights.resize(static_cast<std::size_t>(types));
    double sum = 0.0;
    for (std::uint64_t q = 0; q < types; ++q) {
      const double u = rng.uniform(7, static_cast<std::uint32_t>(r),
                                   static_cast<std::uint32_t>(q >> 32),
                                   static_cast<std::uint32_t>(q));
      start.weights[static_cast<std::size_t>(q)] = -std::log(1.0 - u);
      sum += start.weights[static_cast<std::size_t>(q)];
    }
    for (double& v : start.weights) v /= sum;
    out.push_back(fixed_point_iterate(source, start, options).first.loglik);
  }
  return out;
}

}  // namespace hetprod
