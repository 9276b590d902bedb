#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hetprod/errors.hpp"
#include "hetprod/model_family.hpp"
#include "hetprod/param_grid.hpp"

using namespace hetprod;

TEST_CASE("families and parameter names") {
  CHECK(parse_family("cd") == ModelFamily::DynamicCD);
  CHECK(family_name(parse_family("ces")) == "ces");
  CHECK_THROWS_AS(parse_family("translog"), ConfigError);
  const ModelSpec ces(ModelFamily::GeneralizedCES, 7);
  CHECK(ces.num_params() == 7);
  CHECK(ces.param_index("sigma") == ces::kSigma);
  CHECK(ces.noise_index() == ces::kS);
  CHECK_THROWS_AS(ces.param_index("beta"), ConfigError);
}

TEST_CASE("CD mean output and derived quantities") {
  const ModelSpec m(ModelFamily::DynamicCD, 7);
  const ParamVector p{1.0, 0.3, 0.6, 0.02, -0.001, 0.1};
  CHECK(mean_output(m, p, 2.0, 3.0, 4) == doctest::Approx(1.0 + 0.08 - 0.016 + 0.6 + 1.8));
  // alpha_bar = alpha0 + alpha1 * 4 + alpha2 * 20 for T = 7.
  CHECK(time_avg_intercept(m, p) == doctest::Approx(1.0 + 0.02 * 4.0 - 0.001 * 20.0));
  CHECK(returns_to_scale(m, p) == doctest::Approx(0.9));
  CHECK(labor_elasticity(m, p, 1.0, 1.0) == 0.6);
  CHECK_THROWS_AS(mean_output(m, ParamVector{1.0, -0.1, 0.6, 0, 0, 0.1}, 0, 0, 1), ConfigError);
  CHECK_FALSE(is_admissible(m, ParamVector{1.0, 0.1, 0.6, 0, 0, 0.01}));
}

TEST_CASE("CES composite, limits and labor elasticity") {
  const ModelSpec m(ModelFamily::GeneralizedCES, 5);
  // Near sigma = 1 the composite approaches the CD geometric mean.
  CHECK(ces_log_composite(0.4, 1e-9, 2.0, 3.0) == doctest::Approx(0.4 * 2.0 + 0.6 * 3.0).epsilon(1e-6));
  CHECK(ces_log_composite(0.4, 0.0, 2.0, 3.0) == doctest::Approx(2.6));
  const double rho = 0.5;
  CHECK(ces_log_composite(0.3, rho, 1.0, 2.0) ==
        doctest::Approx(std::log(0.3 * std::exp(0.5) + 0.7 * std::exp(1.0)) / 0.5));
  // Extreme inputs stay finite.
  CHECK(std::isfinite(ces_log_composite(0.5, 0.8, 900.0, -900.0)));
  const ParamVector p{0.5, 0.4, 1.1, 2.0, 0.0, 0.0, 0.2};
  const double k = 1.3, l = 0.7, h = 1e-6;
  const double numeric = (mean_output(m, p, k, l + h, 1) - mean_output(m, p, k, l - h, 1)) / (2 * h);
  CHECK(labor_elasticity(m, p, k, l) == doctest::Approx(numeric).epsilon(1e-7));
  CHECK_FALSE(is_admissible(m, ParamVector{0.5, 0.4, 1.1, 1.0005, 0.0, 0.0, 0.2}));
  CHECK(returns_to_scale(m, p) == 1.1);
}

TEST_CASE("intensive family") {
  const ModelSpec m(ModelFamily::IntensiveCD, 4);
  const ParamVector p{0.5, 0.3, 0.2};
  CHECK(mean_output(m, p, 2.0, 99.0, 1) == doctest::Approx(1.1));
  CHECK(labor_elasticity(m, p, 0, 0) == doctest::Approx(0.7));
  CHECK_THROWS_AS(time_avg_intercept(m, p), ConfigError);
}

TEST_CASE("grid axes, enumeration and encoding") {
  GridAxis a{"beta", 0.0, 1.0, 3};
  CHECK(a.value(1) == 0.5);
  CHECK(a.value(2) == 1.0);
  CHECK(a.spacing() == 0.5);
  const PanelDataset d = fixture::cd_panel(30, 6, 2);
  const ModelSpec m(ModelFamily::DynamicCD, 6);
  const std::vector<int> pts{4, 3, 3, 2, 2, 3};
  const GridSpec g = default_grid(m, d, pts);
  CHECK(g.num_types() == 4 * 3 * 3 * 2 * 2 * 3);
  CHECK(g.axis("s").min == kMinNoiseSd);
  CHECK(g.axis("beta").min == 0.0);
  const TypeTable table(m, g);
  // Last axis varies fastest.
  CHECK(table.value(1, 5) == g.axis("s").value(1));
  CHECK(table.value(1, 0) == g.axis("alpha0").value(0));
  for (std::uint64_t q = 0; q < table.size(); q += 7) {
    const auto idx = table.decode(q);
    CHECK(table.encode(idx) == q);
    const ParamVector p = table.enumerate_type(q);
    for (std::size_t dim = 0; dim < table.dims(); ++dim) CHECK(p[dim] == table.value(q, dim));
    CHECK(is_admissible(m, p));
  }
  CHECK_THROWS(table.decode(table.size()));
}

TEST_CASE("grid validation and overrides") {
  const PanelDataset d = fixture::cd_panel(20, 5, 4);
  const ModelSpec m(ModelFamily::DynamicCD, 5);
  GridSpec g = default_grid(m, d, std::vector<int>{3, 3, 3, 1, 1, 2});
  CHECK(g.axis("alpha1").min == g.axis("alpha1").max);
  CHECK_THROWS_AS(apply_overrides(g, {{"beta", AxisOverride{-0.5, std::nullopt, std::nullopt}}}, m),
                  ConfigError);
  CHECK_THROWS_AS(apply_overrides(g, {{"s", AxisOverride{0.01, std::nullopt, std::nullopt}}}, m),
                  ConfigError);
  CHECK_THROWS_AS(apply_overrides(g, {{"omega", AxisOverride{}}}, m), ConfigError);
  const GridSpec o = apply_overrides(g, {{"beta", AxisOverride{0.1, 0.9, 5}}}, m);
  CHECK(o.axis("beta").points == 5);
  CHECK(o.axis("beta").value(4) == 0.9);
  CHECK_THROWS_AS(default_grid(m, d, std::vector<int>{3, 3}), ConfigError);
}

TEST_CASE("CES default grid avoids sigma = 1") {
  const PanelDataset d = fixture::cd_panel(20, 5, 4);
  const ModelSpec m(ModelFamily::GeneralizedCES, 5);
  // 0.2 + 0.2 * j hits 1.0 at j = 4 before the shift.
  const GridSpec g = default_grid(m, d, std::vector<int>{2, 2, 2, 30, 1, 1, 2});
  const GridAxis& s = g.axis("sigma");
  for (int j = 0; j < s.points; ++j) CHECK(std::abs(s.value(j) - 1.0) >= kSigmaGuard);
}
