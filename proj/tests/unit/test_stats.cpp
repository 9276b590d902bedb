#include <doctest.h>

#include <cmath>
#include <random>

#include "hetprod/stats.hpp"
#include "oracles.hpp"

using namespace hetprod;

TEST_CASE("sample quantile averages at exact hits") {
  const std::vector<double> x{4, 1, 3, 2};
  CHECK(sample_quantile(x, 0.5) == doctest::Approx(2.5));
  CHECK(sample_quantile(x, 0.25) == doctest::Approx(1.5));
  CHECK(sample_quantile(x, 0.3) == 2.0);
  CHECK(sample_quantile(x, 0.0) == 1.0);
  CHECK(sample_quantile(x, 1.0) == 4.0);
  CHECK_THROWS(sample_quantile(std::vector<double>{}, 0.5));
}

TEST_CASE("sample quantile agrees with the definition on random samples") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x(1 + rep * 7);
    for (double& v : x) v = z(rng);
    for (double p : {0.1, 0.25, 0.5, 0.75, 0.9})
      CHECK(sample_quantile(x, p) == oracle::quantile(x, p));
  }
}

TEST_CASE("weighted lower quantile") {
  const std::vector<double> v{3.0, 1.0, 2.0};
  const std::vector<double> w{0.2, 0.5, 0.3};
  CHECK(weighted_lower_quantile(v, w, 0.5) == 1.0);
  CHECK(weighted_lower_quantile(v, w, 0.51) == 2.0);
  CHECK(weighted_lower_quantile(v, w, 0.8) == 2.0);
  CHECK(weighted_lower_quantile(v, w, 0.81) == 3.0);
  // Zero-weight atoms are never returned.
  CHECK(weighted_lower_quantile(std::vector<double>{0.0, 5.0}, std::vector<double>{0.0, 1.0}, 0.1) == 5.0);
}

TEST_CASE("moments use denominator n") {
  const std::vector<double> x{1, 2, 3, 4};
  CHECK(mean(x) == 2.5);
  CHECK(sd(x) == doctest::Approx(std::sqrt(1.25)));
  CHECK(std::isnan(pearson(x, std::vector<double>{1, 1, 1, 1})));
  CHECK(pearson(x, std::vector<double>{2, 4, 6, 8}) == doctest::Approx(1.0));
}
