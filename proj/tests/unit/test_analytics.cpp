#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "hetprod/analytics.hpp"
#include "hetprod/errors.hpp"
#include "oracles.hpp"

using namespace hetprod;

namespace {
// Posterior records with given CD parameters (alpha1 = alpha2 = 0).
std::vector<FirmPosterior> cd_posteriors(const PanelDataset& d, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<FirmPosterior> out;
  for (const auto& id : d.firm_ids) {
    FirmPosterior fp;
    fp.firm_id = id;
    const double a = 3 + z(rng), b = 0.3 + 0.1 * std::abs(z(rng)), g = 0.5 + 0.1 * std::abs(z(rng));
    fp.expected_params = ParamVector{a, b, g, 0.0, 0.0, 0.1};
    fp.posterior_sd.assign(6, 0.0);
    fp.alpha_bar = a;
    fp.scale = b + g;
    fp.columns = {a, b, g, 0.0, 0.0, 0.1, a, b + g};
    out.push_back(fp);
  }
  return out;
}
}  // namespace

TEST_CASE("TTP at sector medians") {
  const PanelDataset d = fixture::cd_panel(30, 5, 7);
  const ModelSpec m(ModelFamily::DynamicCD, 5);
  const auto post = cd_posteriors(d, 1);
  const TTPResult r = compute_ttp(post, d, m);
  REQUIRE(r.records.size() == 30);
  for (const auto& g : r.sectors) {
    std::vector<double> k, l;
    for (std::size_t i = 0; i < 30; ++i)
      if ((*d.sector)[i] == g.sector)
        for (int t = 0; t < 5; ++t) {
          k.push_back(d.k(static_cast<Eigen::Index>(i), t));
          l.push_back(d.l(static_cast<Eigen::Index>(i), t));
        }
    CHECK(g.log_k0 == oracle::quantile(k, 0.5));
    CHECK(g.log_l0 == oracle::quantile(l, 0.5));
  }
  for (std::size_t i = 0; i < 30; ++i) {
    const auto& g = *std::find_if(r.sectors.begin(), r.sectors.end(),
                                  [&](const TTPGroupSummary& s) { return s.sector == (*d.sector)[i]; });
    const auto& p = post[i].expected_params;
    CHECK(r.records[i].ln_ttp == doctest::Approx(p[0] + p[1] * g.log_k0 + p[2] * g.log_l0));
    CHECK(r.records[i].ln_tfp == post[i].alpha_bar);
  }
  TTPReference ref;
  ref.log_k0 = 8.0;
  ref.log_l0 = 4.0;
  const TTPResult fixed = compute_ttp(post, d, m, ref);
  CHECK(fixed.records[0].ln_ttp == doctest::Approx(post[0].alpha_bar + post[0].expected_params[1] * 8 +
                                                   post[0].expected_params[2] * 4));
  PanelDataset nosec = d;
  nosec.sector.reset();
  CHECK_THROWS_AS(compute_ttp(post, nosec, m), DataError);
  CHECK_THROWS_AS(compute_ttp(post, d, ModelSpec(ModelFamily::IntensiveCD, 5)), ConfigError);
}

TEST_CASE("markups match brute force") {
  const PanelDataset d = fixture::cd_panel(60, 4, 8);
  const ModelSpec m(ModelFamily::DynamicCD, 4);
  const auto post = cd_posteriors(d, 2);
  const MarkupResult r = compute_markups(post, d, m);
  std::vector<double> ref;
  for (std::size_t i = 0; i < 60; ++i)
    for (int t = 0; t < 4; ++t) ref.push_back(post[i].expected_params[2] / (*d.wage_share)(static_cast<Eigen::Index>(i), t));
  REQUIRE(r.records.size() == ref.size());
  for (std::size_t j = 0; j < ref.size(); ++j) CHECK(r.records[j].markup == doctest::Approx(ref[j]).epsilon(1e-14));
  CHECK(r.summary.mean == doctest::Approx(oracle::mean(ref)).epsilon(1e-12));
  CHECK(r.summary.sd == doctest::Approx(oracle::sd(ref)).epsilon(1e-12));
  CHECK(r.summary.p50 == oracle::quantile(ref, 0.5));
  CHECK(r.summary.p90_p10 == doctest::Approx(oracle::quantile(ref, 0.9) / oracle::quantile(ref, 0.1)));
  PanelDataset noshare = d;
  noshare.wage_share.reset();
  CHECK_THROWS_AS(compute_markups(post, noshare, m), DataError);
}

TEST_CASE("explained share matches backfitting and is monotone") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> u(0, 4);
  const std::size_t n = 200;
  std::vector<double> y(n);
  std::vector<int> f1(n), f2(n);
  for (std::size_t i = 0; i < n; ++i) {
    f1[i] = u(rng);
    f2[i] = (f1[i] + u(rng)) % 5;  // correlated with f1
    y[i] = 0.5 * f1[i] - 0.3 * f2[i] + z(rng);
  }
  int dof = 0;
  const double r1 = explained_share(y, {f1}, &dof);
  CHECK(dof == 4);
  CHECK(r1 == doctest::Approx(oracle::backfit_r2(y, {f1})).epsilon(1e-10));
  const double r12 = explained_share(y, {f1, f2}, &dof);
  CHECK(dof == 8);
  CHECK(r12 == doctest::Approx(oracle::backfit_r2(y, {f1, f2})).epsilon(1e-9));
  CHECK(r12 >= r1);
  CHECK(r12 <= 1.0);
  CHECK(explained_share(std::vector<double>(n, 2.0), {f1}) == 0.0);
  // A factor with one level per observation explains everything.
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  CHECK(explained_share(y, {ids}) == doctest::Approx(1.0));
}

TEST_CASE("decile groups and ANOVA groupings") {
  std::vector<double> x;
  for (int i = 0; i < 95; ++i) x.push_back(std::sin(i * 1.7));
  CHECK(decile_groups(x) == oracle::deciles(x));
  const PanelDataset d = fixture::cd_panel(120, 4, 6);
  const ModelSpec m(ModelFamily::DynamicCD, 4);
  const auto post = cd_posteriors(d, 3);
  const auto a = anova_decomposition(post, d, m, AnovaGrouping::Sector);
  const auto b = anova_decomposition(post, d, m, AnovaGrouping::SectorSize);
  const auto c = anova_decomposition(post, d, m, AnovaGrouping::SectorSizeJoint);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(a.rows[j].explained_share <= b.rows[j].explained_share + 1e-12);
    CHECK(b.rows[j].explained_share <= c.rows[j].explained_share + 1e-12);
  }
  CHECK(parse_grouping(grouping_name(AnovaGrouping::SectorSizeJoint)) == AnovaGrouping::SectorSizeJoint);
  CHECK_THROWS_AS(parse_grouping("region"), ConfigError);
}

TEST_CASE("dominance counts match pair enumeration") {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> u(0, 6);
  for (std::size_t n : {2u, 3u, 17u, 300u}) {
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = u(rng), b[i] = u(rng);  // many ties
    CHECK(count_concordant_pairs(a, b) == oracle::concordant_pairs(a, b));
    const auto r = dominance_diagnostic(a, b);
    CHECK(r.pairs == n * (n - 1) / 2);
    CHECK(r.exact_checked);
  }
  std::vector<double> big(5000), other(5000);
  for (std::size_t i = 0; i < 5000; ++i) big[i] = static_cast<double>(i), other[i] = -static_cast<double>(i);
  const auto r = dominance_diagnostic(big, other);
  CHECK(r.violating_pairs == 0);
  CHECK_FALSE(r.exact_checked);
  CHECK(r.correlation == doctest::Approx(-1.0));
}
