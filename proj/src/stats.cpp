#include "hetprod/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace hetprod {

double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sd(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty())
    throw std::invalid_argument("pearson: size mismatch");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nan("");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double sample_quantile(std::span<const double> x, double p) {
  if (x.empty()) throw std::invalid_argument("quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const auto n = static_cast<double>(s.size());
  const double np = n * p;
  const double r = std::round(np);
  if (std::abs(np - r) < 1e-9) {
    const auto j = static_cast<std::size_t>(r);
    if (j == 0) return s.front();
    if (j >= s.size()) return s.back();
    return 0.5 * (s[j - 1] + s[j]);
  }
  const auto j = static_cast<std::size_t>(std::ceil(np));
  return s[std::clamp<std::size_t>(j, 1, s.size()) - 1];
}

double weighted_lower_quantile(std::span<const double> values,
                               std::span<const double> weights, double p) {
  if (values.size() != weights.size() || values.empty())
    throw std::invalid_argument("weighted quantile: size mismatch");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("weighted quantile: zero mass");
  const double target = p * total;
  double cum = 0.0;
  double last = values[order.front()];
  for (std::size_t idx : order) {
    if (weights[idx] <= 0.0) continue;
    cum += weights[idx];
    last = values[idx];
    // Relative slack absorbs summation noise at exact hits.
    if (cum >= target * (1.0 - 1e-12)) return values[idx];
  }
  return last;
}

}  // namespace hetprod
