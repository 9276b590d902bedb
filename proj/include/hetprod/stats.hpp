#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hetprod {

double mean(std::span<const double> x);

// Standard deviation with denominator n.
double sd(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);

// Empirical quantile that averages the two neighbouring order statistics when
// n*p is an integer (so the median of an even sample is the midpoint).
double sample_quantile(std::span<const double> x, double p);

// Smallest support value whose cumulative weight reaches p. Weights need not
// be normalized; values need not be sorted.
double weighted_lower_quantile(std::span<const double> values,
                               std::span<const double> weights, double p);

}  // namespace hetprod
