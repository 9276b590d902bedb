#include <doctest.h>

#include "fixtures.hpp"
#include "hetprod/baseline_ols.hpp"
#include "hetprod/errors.hpp"

using namespace hetprod;

TEST_CASE("per-firm OLS matches the normal equations") {
  const PanelDataset d = fixture::cd_panel(10, 8, 21);
  const ModelSpec m(ModelFamily::DynamicCD, 8);
  const auto est = per_firm_ols(d, m);
  REQUIRE(est.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    const Eigen::MatrixXd x = ols_design(d, m, i);
    const Eigen::VectorXd y = d.y.row(static_cast<Eigen::Index>(i)).transpose();
    const Eigen::VectorXd b = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    REQUIRE(est[i].rank_ok);
    for (Eigen::Index j = 0; j < b.size(); ++j)
      CHECK(est[i].coefficients[static_cast<std::size_t>(j)] == doctest::Approx(b(j)).epsilon(1e-7));
    const double rss = (y - x * b).squaredNorm();
    CHECK(est[i].residual_sd == doctest::Approx(std::sqrt(rss / 3.0)).epsilon(1e-7));
  }
}

TEST_CASE("rank deficiency is flagged, short panels rejected") {
  PanelDataset d = fixture::cd_panel(3, 7, 2);
  d.k.row(1).setConstant(2.0);  // collinear with the intercept
  const auto est = per_firm_ols(d, ModelSpec(ModelFamily::DynamicCD, 7));
  CHECK(est[0].rank_ok);
  CHECK_FALSE(est[1].rank_ok);
  CHECK(est[1].coefficients.empty());
  const PanelDataset s = fixture::cd_panel(3, 5, 2);
  CHECK_THROWS_AS(per_firm_ols(s, ModelSpec(ModelFamily::DynamicCD, 5)), ConfigError);
  CHECK(per_firm_ols(to_intensive(s), ModelSpec(ModelFamily::IntensiveCD, 5))[0].rank_ok);
}

TEST_CASE("pooled OLS recovers a common technology") {
  PanelDataset d = fixture::cd_panel(200, 6, 5, 0.0);
  for (Eigen::Index i = 0; i < d.y.rows(); ++i)
    for (int t = 0; t < 6; ++t) d.y(i, t) = 1.0 + 0.3 * d.k(i, t) + 0.6 * d.l(i, t) + 0.01 * (t + 1);
  const FirmOLSEstimate p = pooled_ols(d, ModelSpec(ModelFamily::DynamicCD, 6));
  REQUIRE(p.rank_ok);
  CHECK(p.coefficients[0] == doctest::Approx(1.0));
  CHECK(p.coefficients[1] == doctest::Approx(0.01));
  CHECK(p.coefficients[3] == doctest::Approx(0.3));
  CHECK(p.coefficients[4] == doctest::Approx(0.6));
}
