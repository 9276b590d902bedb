#pragma once
// Independent reference implementations used by the unit and acceptance
// tests. None of them calls into the library code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Type-2 sample quantile written from the definition: the inverse of the
// empirical CDF, averaging at discontinuities.
inline double quantile(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  for (std::size_t j = 1; j <= x.size(); ++j) {
    const double cdf = static_cast<double>(j) / n;
    if (std::abs(cdf - p) < 1e-12) return j < x.size() ? 0.5 * (x[j - 1] + x[j]) : x[j - 1];
    if (cdf > p) return x[j - 1];
  }
  return x.back();
}

inline double mean(const std::vector<double>& x) {
  long double s = 0;
  for (double v : x) s += v;
  return static_cast<double>(s / x.size());
}

inline double sd(const std::vector<double>& x) {
  const double m = mean(x);
  long double s = 0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(static_cast<double>(s / x.size()));
}

struct NpmleSolution {
  std::vector<double> weights;
  double loglik = 0.0;
};

// Log-barrier interior point method for max sum_i ln(sum_q f_iq w_q) over
// the simplex. Each barrier subproblem is solved by equality-constrained
// Newton steps with backtracking; the duality gap at the end is below Q*mu.
// Steps are computed in w-scaled coordinates (step = w .* u) so that weights
// near zero do not wreck the conditioning of the KKT system.
inline NpmleSolution barrier_npmle(const Eigen::MatrixXd& log_f) {
  const Eigen::Index q = log_f.cols();
  Eigen::VectorXd shift = log_f.rowwise().maxCoeff();
  Eigen::MatrixXd f = (log_f.colwise() - shift).array().exp().matrix();
  Eigen::VectorXd w = Eigen::VectorXd::Constant(q, 1.0 / static_cast<double>(q));
  auto objective = [&](const Eigen::VectorXd& v, double mu) -> double {
    const Eigen::VectorXd d = f * v;
    if ((d.array() <= 0).any() || (v.array() <= 0).any()) return -INFINITY;
    return d.array().log().sum() + mu * v.array().log().sum();
  };
  for (double mu = 1.0; mu > 1e-14; mu *= 0.1) {
    for (int it = 0; it < 1000; ++it) {
      const Eigen::VectorXd inv = (f * w).cwiseInverse();
      const Eigen::VectorXd g = f.transpose() * inv + mu * w.cwiseInverse();
      const Eigen::MatrixXd fw = inv.asDiagonal() * f * w.asDiagonal();
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(q + 1, q + 1);
      kkt.topLeftCorner(q, q) = -(fw.transpose() * fw);
      kkt.topLeftCorner(q, q).diagonal().array() -= mu;
      kkt.block(0, q, q, 1) = w;
      kkt.block(q, 0, 1, q) = w.transpose();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(q + 1);
      rhs.head(q) = -w.cwiseProduct(g);
      const Eigen::VectorXd step = w.cwiseProduct(kkt.fullPivLu().solve(rhs).head(q));
      const double decrement = g.dot(step);
      if (!(decrement > 1e-14)) break;
      double t = 1.0;
      while ((w + t * step).minCoeff() <= 0.0) t *= 0.5;
      const double f0 = objective(w, mu);
      while (objective(w + t * step, mu) < f0 + 0.25 * t * decrement && t > 1e-20) t *= 0.5;
      w += t * step;
      w /= w.sum();
    }
  }
  NpmleSolution s;
  s.weights.assign(w.data(), w.data() + q);
  s.loglik = ((f * w).array().log().sum()) + shift.sum();
  return s;
}

// Least-squares fit of y on additive categorical effects by backfitting
// (cyclic group-mean updates). Returns R^2.
inline double backfit_r2(const std::vector<double>& y, const std::vector<std::vector<int>>& factors) {
  const std::size_t n = y.size();
  const double mu = mean(y);
  double tss = 0.0;
  for (double v : y) tss += (v - mu) * (v - mu);
  if (tss <= 0.0) return 0.0;
  // Levels renumbered 0..L-1 per factor.
  std::vector<std::vector<int>> code(factors.size(), std::vector<int>(n));
  std::vector<int> levels(factors.size());
  for (std::size_t f = 0; f < factors.size(); ++f) {
    std::map<int, int> ids;
    for (std::size_t i = 0; i < n; ++i)
      code[f][i] = ids.emplace(factors[f][i], static_cast<int>(ids.size())).first->second;
    levels[f] = static_cast<int>(ids.size());
  }
  std::vector<std::vector<double>> effect(factors.size());
  for (std::size_t f = 0; f < factors.size(); ++f) effect[f].assign(levels[f], 0.0);
  std::vector<double> fit(n, mu);
  const double scale = std::sqrt(tss / n);
  for (int sweep = 0; sweep < 1000000; ++sweep) {
    double change = 0.0;
    for (std::size_t f = 0; f < factors.size(); ++f) {
      std::vector<double> sum(levels[f], 0.0);
      std::vector<int> cnt(levels[f], 0);
      for (std::size_t i = 0; i < n; ++i) {
        sum[code[f][i]] += y[i] - (fit[i] - effect[f][code[f][i]]);
        ++cnt[code[f][i]];
      }
      std::vector<double> next(levels[f]);
      for (int g = 0; g < levels[f]; ++g) {
        next[g] = sum[g] / cnt[g];
        change = std::max(change, std::abs(next[g] - effect[f][g]));
      }
      for (std::size_t i = 0; i < n; ++i) fit[i] += next[code[f][i]] - effect[f][code[f][i]];
      effect[f] = next;
    }
    if (change < 1e-14 * (1.0 + scale)) break;
  }
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) rss += (y[i] - fit[i]) * (y[i] - fit[i]);
  return 1.0 - rss / tss;
}

// Decile group from the definition: number of the nine type-2 deciles that
// lie strictly below the value.
inline std::vector<int> deciles(const std::vector<double>& x) {
  std::vector<double> cut;
  for (int d = 1; d <= 9; ++d) cut.push_back(quantile(x, d / 10.0));
  std::vector<int> g;
  for (double v : x) {
    int c = 0;
    for (double q : cut) c += q < v ? 1 : 0;
    g.push_back(c);
  }
  return g;
}

inline std::uint64_t concordant_pairs(const std::vector<double>& a, const std::vector<double>& b) {
  std::uint64_t c = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if ((a[i] > a[j] && b[i] > b[j]) || (a[i] < a[j] && b[i] < b[j])) ++c;
  return c;
}

}  // namespace oracle
