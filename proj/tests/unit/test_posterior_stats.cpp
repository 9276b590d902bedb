#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hetprod/eb_solver.hpp"
#include "hetprod/errors.hpp"
#include "hetprod/posterior_stats.hpp"
#include "hetprod/stats.hpp"
#include "oracles.hpp"

using namespace hetprod;

namespace {
struct Fitted {
  PanelDataset data = fixture::cd_panel(40, 6, 31);
  ModelSpec model{ModelFamily::DynamicCD, 6};
  TypeTable table{model, default_grid(model, data, std::vector<int>{6, 5, 5, 2, 2, 3})};
  ModelDensity density{model, data, table};
  MixingDistribution pi;
  Fitted() {
    SolverOptions o;
    o.tol = 1e-11;
    o.loglik_tol = 1e-13;
    o.max_iter = 100000;
    pi = extract_support(fixed_point_iterate(density, uniform_mixing(table.size()), o).first,
                         default_support_threshold(table.size()));
  }
};
}  // namespace

TEST_CASE("moment columns") {
  CHECK(moment_columns(ModelSpec(ModelFamily::IntensiveCD, 3)) == std::vector<std::string>{"a", "b", "s", "scale"});
  CHECK(moment_columns(ModelSpec(ModelFamily::DynamicCD, 3)).back() == "scale");
  CHECK(is_intercept_column("alpha_bar"));
  CHECK_FALSE(is_intercept_column("beta"));
}

TEST_CASE("posterior means obey the law of total expectation and variance") {
  Fitted f;
  const auto post = firm_posteriors(f.density, f.pi, f.table, f.data.firm_ids);
  REQUIRE(post.size() == 40);
  // Exact identity at any prior: the average posterior mean equals the mean
  // under the once-updated prior.
  std::vector<double> updated(f.table.size(), 0.0);
  std::vector<double> row(f.table.size());
  for (std::size_t i = 0; i < 40; ++i) {
    f.density.fill_row(i, 0, f.table.size(), row);
    const auto h = posterior_row(row, f.pi.weights);
    for (std::size_t q = 0; q < h.size(); ++q) updated[q] += h[q] / 40.0;
  }
  const auto cols = posterior_columns(post);
  const auto names = moment_columns(f.model);
  for (std::size_t c = 0; c < names.size(); ++c) {
    double m = 0.0;
    for (std::size_t q = 0; q < updated.size(); ++q)
      if (updated[q] > 0) m += updated[q] * type_columns(f.table, q)[c];
    CHECK(std::abs(mean(cols[c]) - m) <= 1e-10 * (1.0 + std::abs(m)));
  }
  // At the fixed point: Var_pi = mean posterior variance + variance of the
  // posterior means, so the posterior means are less dispersed.
  const PopulationMoments mix = population_moments(f.pi, f.table);
  for (std::size_t d = 0; d < f.model.num_params(); ++d) {
    double within = 0.0;
    for (const auto& fp : post) within += fp.posterior_sd[d] * fp.posterior_sd[d] / 40.0;
    const double between = sd(cols[d]) * sd(cols[d]);
    CHECK(within + between == doctest::Approx(mix.sd[d] * mix.sd[d]).epsilon(1e-6));
    CHECK(sd(cols[d]) <= mix.sd[d] + 1e-9);
  }
  // Derived columns are posterior means of the derived quantity.
  for (const auto& fp : post) {
    CHECK(fp.columns[f.model.num_params()] == doctest::Approx(fp.alpha_bar));
    CHECK(fp.scale == doctest::Approx(fp.expected_params[cd::kBeta] + fp.expected_params[cd::kGamma]));
    CHECK(f.pi.weights[fp.top_type] > 0.0);
  }
}

TEST_CASE("population and posterior-mean moments") {
  Fitted f;
  const PopulationMoments mix = population_moments(f.pi, f.table);
  std::vector<double> values, weights;
  for (std::uint64_t q : f.pi.support) {
    values.push_back(f.table.value(q, cd::kBeta));
    weights.push_back(f.pi.weights[q]);
  }
  const std::size_t b = mix.index("beta");
  double m = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j) m += values[j] * weights[j];
  CHECK(mix.mean[b] == doctest::Approx(m));
  CHECK(mix.p50[b] == weighted_lower_quantile(values, weights, 0.5));
  CHECK(mix.correlation(0, 0) == doctest::Approx(1.0));
  // alpha1 may be constant on the support; then its correlations are zero.
  const auto post = firm_posteriors(f.density, f.pi, f.table, f.data.firm_ids);
  const PopulationMoments pm = posterior_mean_moments(post, f.model);
  const auto cols = posterior_columns(post);
  CHECK(pm.p10[b] == oracle::quantile(cols[b], 0.1));
  CHECK(pm.sd[b] == doctest::Approx(oracle::sd(cols[b])));
  CHECK(pm.correlation.isApprox(pm.correlation.transpose()));
  CHECK_THROWS_AS(mix.index("nope"), ConfigError);
}

TEST_CASE("constant columns have zero correlation") {
  const ModelSpec m(ModelFamily::IntensiveCD, 3);
  GridSpec g;
  g.axes = {{"a", 0.0, 1.0, 3}, {"b", 0.5, 0.5, 1}, {"s", 0.1, 0.1, 1}};
  const TypeTable table(m, g);
  MixingDistribution pi;
  pi.weights = {0.2, 0.3, 0.5};
  pi.support = {0, 1, 2};
  const PopulationMoments mm = population_moments(pi, table);
  CHECK(mm.correlation(0, 1) == 0.0);
  CHECK(mm.correlation(1, 1) == 1.0);
  CHECK(mm.sd[1] == 0.0);
}

TEST_CASE("dispersion ratios") {
  PopulationMoments m;
  m.columns = {"alpha_bar", "beta", "alpha1"};
  m.mean = {0, 0, 0};
  m.sd = {1, 1, 1};
  m.p10 = {1.0, 0.2, -0.1};
  m.p50 = {2.0, 0.3, 0.0};
  m.p90 = {3.0, 0.6, 0.1};
  const auto rows = dispersion_table(m);
  CHECK(rows[0].p90_p10 == doctest::Approx(std::exp(2.0)));
  CHECK(rows[1].p90_p10 == doctest::Approx(3.0));
  CHECK_FALSE(rows[1].flagged);
  CHECK(rows[2].flagged);
}

TEST_CASE("posterior CSV round trip and SVG output") {
  Fitted f;
  const auto post = firm_posteriors(f.density, f.pi, f.table, f.data.firm_ids);
  const auto dir = fixture::temp_dir("post");
  write_posteriors_csv(post, f.model, (dir / "p.csv").string());
  const auto back = read_posteriors_csv((dir / "p.csv").string(), f.model);
  REQUIRE(back.size() == post.size());
  for (std::size_t i = 0; i < post.size(); ++i) {
    CHECK(back[i].firm_id == post[i].firm_id);
    CHECK(back[i].columns == post[i].columns);
    CHECK(back[i].posterior_sd == post[i].posterior_sd);
    CHECK(back[i].top_type == post[i].top_type);
  }
  const std::string svg = svg_histogram({{"x", {1, 2, 2, 3}, {}}, {"y", {0, 5}, {0.5, 0.5}}}, "t");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
}
