#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "hetprod/eb_solver.hpp"
#include "hetprod/errors.hpp"
#include "oracles.hpp"

using namespace hetprod;

namespace {
RowMatrix random_log_f(std::size_t n, std::size_t q, unsigned seed, double spread = 3.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = spread * z(rng) - 40.0;
  return m;
}
}  // namespace

TEST_CASE("posterior rows by hand for I = 4, Q = 6") {
  const std::vector<double> pi{0.1, 0.2, 0.0, 0.3, 0.15, 0.25};
  const double f[4][6] = {{0.5, 1.0, 2.0, 0.25, 1.0, 0.1},
                          {1.0, 1.0, 1.0, 1.0, 1.0, 1.0},
                          {0.0, 3.0, 1.0, 0.0, 0.0, 0.0},
                          {2.0, 0.5, 0.5, 0.5, 4.0, 1.0}};
  for (int i = 0; i < 4; ++i) {
    std::vector<double> lf(6);
    double den = 0.0;
    for (int q = 0; q < 6; ++q) {
      lf[q] = f[i][q] > 0 ? std::log(f[i][q]) - 700.0 : -INFINITY;  // deep underflow in levels
      den += f[i][q] * pi[q];
    }
    const auto h = posterior_row(lf, pi);
    for (int q = 0; q < 6; ++q) CHECK(h[q] == doctest::Approx(f[i][q] * pi[q] / den).epsilon(1e-13));
    CHECK(h[2] == 0.0);
  }
  const std::vector<double> dead{-INFINITY, -INFINITY, 0.0, -INFINITY, -INFINITY, -INFINITY};
  CHECK_THROWS_AS(posterior_row(dead, pi), DataError);
}

TEST_CASE("fixed point matches the barrier oracle and is coherent") {
  for (unsigned seed = 1; seed <= 10; ++seed) {
    const RowMatrix lf = random_log_f(5, 9, seed);
    const MatrixDensity src(lf);
    SolverOptions o;
    o.tol = 1e-12;
    o.loglik_tol = 1e-14;
    o.max_iter = 500000;
    auto [pi, rep] = fixed_point_iterate(src, uniform_mixing(9), o);
    REQUIRE(rep.converged);
    const auto ref = oracle::barrier_npmle(lf);
    CHECK(pi.loglik == doctest::Approx(ref.loglik).epsilon(1e-9));
    CHECK(pi.loglik <= ref.loglik + 1e-9);
    // Coherence: the prior equals the average posterior.
    std::vector<double> avg(9, 0.0);
    for (Eigen::Index i = 0; i < lf.rows(); ++i) {
      const auto h = posterior_row({&lf(i, 0), 9}, pi.weights);
      for (int q = 0; q < 9; ++q) avg[q] += h[q] / 5.0;
    }
    for (int q = 0; q < 9; ++q) CHECK(std::abs(avg[q] - pi.weights[q]) <= 1e-11);
    // Monotone log-likelihood.
    for (std::size_t n = 1; n < rep.loglik_trace.size(); ++n)
      CHECK(rep.loglik_trace[n] >= rep.loglik_trace[n - 1] - 1e-10);
    CHECK(extract_support(pi, 1e-10 / 9).support.size() <= 5);
  }
}

TEST_CASE("zero weights stay zero and invalid starts are rejected") {
  const RowMatrix lf = random_log_f(4, 6, 77);
  const MatrixDensity src(lf);
  MixingDistribution start;
  start.weights = {0.5, 0.0, 0.5, 0.0, 0.0, 0.0};
  auto [pi, rep] = fixed_point_iterate(src, start);
  CHECK(pi.weights[1] == 0.0);
  CHECK(pi.weights[5] == 0.0);
  start.weights = {0.5, 0.6, 0.0, 0.0, 0.0, 0.0};
  CHECK_THROWS_AS(fixed_point_iterate(src, start), ConfigError);
  start.weights = {1.0};
  CHECK_THROWS_AS(fixed_point_iterate(src, start), ConfigError);
  SolverOptions bad;
  bad.tol = 0.0;
  CHECK_THROWS_AS(fixed_point_iterate(src, uniform_mixing(6), bad), ConfigError);
}

TEST_CASE("streaming and materialized passes give identical iterates") {
  const RowMatrix lf = random_log_f(300, 5000, 5, 2.0);
  const MatrixDensity src(lf);
  SolverOptions o;
  o.max_iter = 15;
  auto [a, ra] = fixed_point_iterate(src, uniform_mixing(5000), o);
  o.memory_budget_bytes = 1 << 20;
  auto [b, rb] = fixed_point_iterate(src, uniform_mixing(5000), o);
  CHECK(ra.materialized);
  CHECK_FALSE(rb.materialized);
  CHECK(a.weights == b.weights);
  CHECK(ra.loglik_trace == rb.loglik_trace);
  CHECK(log_likelihood(src, a.weights) == doctest::Approx(a.loglik).epsilon(1e-12));
}

TEST_CASE("a firm with no finite density is a data error") {
  RowMatrix lf = random_log_f(3, 4, 8);
  lf.row(1).setConstant(-INFINITY);
  CHECK_THROWS_AS(fixed_point_iterate(MatrixDensity(lf), uniform_mixing(4)), DataError);
}

TEST_CASE("support extraction") {
  MixingDistribution pi;
  pi.weights = {0.5, 1e-14, 0.3, 0.2 - 1e-14};
  const auto s = extract_support(pi, 1e-12);
  CHECK(s.support == std::vector<std::uint64_t>{0, 2, 3});
  CHECK(s.weights[1] == 0.0);
  CHECK(s.weights[0] + s.weights[2] + s.weights[3] == doctest::Approx(1.0));
  CHECK_THROWS_AS(extract_support(pi, 0.3), ConfigError);
  CHECK_THROWS_AS(extract_support(pi, 0.0), ConfigError);
  CHECK(default_support_threshold(100) == doctest::Approx(1e-12));
}

TEST_CASE("random restarts never beat the optimum") {
  const RowMatrix lf = random_log_f(6, 10, 21);
  const MatrixDensity src(lf);
  SolverOptions o;
  o.tol = 1e-11;
  o.loglik_tol = 1e-13;
  o.max_iter = 200000;
  const double best = oracle::barrier_npmle(lf).loglik;
  const auto lls = restart_logliks(src, 4, 99, o);
  REQUIRE(lls.size() == 4);
  for (double v : lls) {
    CHECK(v <= best + 1e-9);
    CHECK(v == doctest::Approx(best).epsilon(1e-7));
  }
  CHECK(restart_logliks(src, 4, 99, o) == lls);
}
