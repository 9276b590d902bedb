#include "hetprod/analytics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "hetprod/errors.hpp"
#include "hetprod/io.hpp"
#include "hetprod/stats.hpp"

namespace hetprod {

namespace {

void check_alignment(const std::vector<FirmPosterior>& posteriors, const PanelDataset& data) {
  if (posteriors.size() != data.num_firms())
    throw ConfigError("posteriors and panel have different firm counts");
  for (std::size_t i = 0; i < posteriors.size(); ++i)
    if (posteriors[i].firm_id != data.firm_ids[i])
      throw ConfigError("posteriors and panel list firms in a different order");
}

std::vector<double> row_values(const RowMatrix& m, const std::vector<std::size_t>& firms) {
  std::vector<double> out;
  for (std::size_t i : firms)
    for (Eigen::Index t = 0; t < m.cols(); ++t) out.push_back(m(static_cast<Eigen::Index>(i), t));
  return out;
}

double ratio_of_exp(std::span<const double> logs) {
  return std::exp(sample_quantile(logs, 0.9) - sample_quantile(logs, 0.1));
}

double ttp_of(const ModelSpec& model, const FirmPosterior& fp, double k0, double l0) {
  const ParamVector& p = fp.expected_params;
  if (model.family() == ModelFamily::DynamicCD)
    return fp.alpha_bar + p[cd::kBeta] * k0 + p[cd::kGamma] * l0;
  const double sigma = p[ces::kSigma];
  const double rho = (sigma - 1.0) / sigma;
  return fp.alpha_bar + p[ces::kNu] * ces_log_composite(p[ces::kOmega], rho, k0, l0);
}

TTPGroupSummary summarize_group(std::string name, const std::vector<TTPRecord>& records,
                                const std::vector<std::size_t>& members, double k0, double l0) {
  TTPGroupSummary g;
  g.sector = std::move(name);
  g.firms = members.size();
  g.log_k0 = k0;
  g.log_l0 = l0;
  std::vector<double> ttp, tfp;
  for (std::size_t i : members) {
    ttp.push_back(records[i].ln_ttp);
    tfp.push_back(records[i].ln_tfp);
  }
  g.ttp_p90_p10 = ratio_of_exp(ttp);
  g.tfp_p90_p10 = ratio_of_exp(tfp);
  g.sd_ln_ttp = sd(ttp);
  g.sd_ln_tfp = sd(tfp);
  return g;
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

TTPResult compute_ttp(const std::vector<FirmPosterior>& posteriors, const PanelDataset& data,
                      const ModelSpec& model, const TTPReference& reference) {
  if (model.family() == ModelFamily::IntensiveCD)
    throw ConfigError("TTP is defined for the cd and ces families only");
  check_alignment(posteriors, data);
  if (posteriors.empty()) throw ConfigError("no firms");
  const bool explicit_ref = reference.log_k0.has_value() && reference.log_l0.has_value();
  if (reference.log_k0.has_value() != reference.log_l0.has_value())
    throw ConfigError("TTP reference needs both K0 and L0");
  if (!explicit_ref && !data.sector) throw DataError("sector medians need sector codes");

  // Sectors in first-appearance order; without codes everything is one group.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    const std::string code = data.sector ? (*data.sector)[i] : std::string("all");
    if (code.empty()) throw DataError("firm " + data.firm_ids[i] + " has an empty sector code");
    if (!members.count(code)) order.push_back(code);
    members[code].push_back(i);
  }

  TTPResult result;
  result.records.resize(posteriors.size());
  for (const std::string& code : order) {
    const auto& firms = members[code];
    const double k0 = explicit_ref ? *reference.log_k0 : sample_quantile(row_values(data.k, firms), 0.5);
    const double l0 = explicit_ref ? *reference.log_l0 : sample_quantile(row_values(data.l, firms), 0.5);
    for (std::size_t i : firms) {
      TTPRecord& r = result.records[i];
      r.firm_id = posteriors[i].firm_id;
      r.sector = code;
      r.ln_tfp = posteriors[i].alpha_bar;
      r.scale = posteriors[i].scale;
      r.ln_ttp = ttp_of(model, posteriors[i], k0, l0);
      if (!std::isfinite(r.ln_ttp)) throw DataError("non-finite ln TTP for firm " + r.firm_id);
    }
    result.sectors.push_back(summarize_group(code, result.records, firms, k0, l0));
  }
  std::vector<std::size_t> all(posteriors.size());
  std::iota(all.begin(), all.end(), 0);
  result.pooled = summarize_group("pooled", result.records, all, std::nan(""), std::nan(""));
  double ttp = 0.0, tfp = 0.0;
  for (const auto& g : result.sectors) {
    ttp += g.ttp_p90_p10;
    tfp += g.tfp_p90_p10;
  }
  result.mean_sector_ttp_p90_p10 = ttp / static_cast<double>(result.sectors.size());
  result.mean_sector_tfp_p90_p10 = tfp / static_cast<double>(result.sectors.size());
  return result;
}

void write_ttp_csv(const TTPResult& result, const std::string& records_path,
                   const std::string& summary_path) {
  std::ostringstream os;
  os << "firm_id,sector,ln_ttp,ln_tfp,scale\n";
  for (const auto& r : result.records)
    os << r.firm_id << ',' << r.sector << ',' << fmt(r.ln_ttp) << ',' << fmt(r.ln_tfp) << ','
       << fmt(r.scale) << '\n';
  write_text_file(records_path, os.str());

  std::ostringstream ss;
  ss << "group,firms,log_k0,log_l0,ttp_p90_p10,tfp_p90_p10,sd_ln_ttp,sd_ln_tfp\n";
  auto row = [&](const TTPGroupSummary& g) {
    ss << g.sector << ',' << g.firms << ',' << fmt(g.log_k0) << ',' << fmt(g.log_l0) << ','
       << fmt(g.ttp_p90_p10) << ',' << fmt(g.tfp_p90_p10) << ',' << fmt(g.sd_ln_ttp) << ','
       << fmt(g.sd_ln_tfp) << '\n';
  };
  for (const auto& g : result.sectors) row(g);
  row(result.pooled);
  ss << "sector_average," << result.sectors.size() << ",nan,nan,"
     << fmt(result.mean_sector_ttp_p90_p10) << ',' << fmt(result.mean_sector_tfp_p90_p10)
     << ",nan,nan\n";
  write_text_file(summary_path, ss.str());
}

// ---------------------------------------------------------------------------

MarkupSummary summarize_markups(const std::vector<double>& markups) {
  if (markups.empty()) throw DataError("no markup observations");
  MarkupSummary s;
  s.observations = markups.size();
  s.mean = mean(markups);
  s.sd = sd(markups);
  s.p50 = sample_quantile(markups, 0.5);
  const double p10 = sample_quantile(markups, 0.1);
  const double p90 = sample_quantile(markups, 0.9);
  s.p90_p50 = p90 / s.p50;
  s.p90_p10 = p90 / p10;
  return s;
}

MarkupResult compute_markups(const std::vector<FirmPosterior>& posteriors,
                             const PanelDataset& data, const ModelSpec& model) {
  if (!data.wage_share) throw DataError("markups need wage share data");
  check_alignment(posteriors, data);
  const RowMatrix& share = *data.wage_share;
  MarkupResult result;
  std::vector<double> values;
  for (std::size_t i = 0; i < posteriors.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int t = 0; t < data.num_periods(); ++t) {
      const double ws = share(r, t);
      if (!(ws > 0.0) || !std::isfinite(ws))
        throw DataError("nonpositive wage share for firm " + data.firm_ids[i]);
      const double elasticity =
          labor_elasticity(model, posteriors[i].expected_params, data.k(r, t), data.l(r, t));
      const double m = elasticity / ws;
      result.records.push_back({posteriors[i].firm_id, t + 1, m});
      values.push_back(m);
    }
  }
  result.summary = summarize_markups(values);
  return result;
}

void write_markups_csv(const MarkupResult& result, const std::string& records_path,
                       const std::string& summary_path) {
  std::ostringstream os;
  os << "firm_id,t,markup\n";
  for (const auto& r : result.records) os << r.firm_id << ',' << r.t << ',' << fmt(r.markup) << '\n';
  write_text_file(records_path, os.str());
  const auto& s = result.summary;
  std::ostringstream ss;
  ss << "observations,mean,sd,p50,p90_p50,p90_p10\n"
     << s.observations << ',' << fmt(s.mean) << ',' << fmt(s.sd) << ',' << fmt(s.p50) << ','
     << fmt(s.p90_p50) << ',' << fmt(s.p90_p10) << '\n';
  write_text_file(summary_path, ss.str());
}

// ---------------------------------------------------------------------------

AnovaGrouping parse_grouping(std::string_view name) {
  if (name == "sector") return AnovaGrouping::Sector;
  if (name == "sector_size") return AnovaGrouping::SectorSize;
  if (name == "sector_size_joint") return AnovaGrouping::SectorSizeJoint;
  throw ConfigError("unknown grouping: " + std::string(name));
}

std::string grouping_name(AnovaGrouping grouping) {
  switch (grouping) {
    case AnovaGrouping::Sector: return "sector";
    case AnovaGrouping::SectorSize: return "sector_size";
    case AnovaGrouping::SectorSizeJoint: return "sector_size_joint";
  }
  return "?";
}

std::vector<int> decile_groups(std::span<const double> values) {
  std::vector<double> cuts;
  for (int d = 1; d <= 9; ++d) cuts.push_back(sample_quantile(values, d / 10.0));
  std::vector<int> out;
  out.reserve(values.size());
  for (double v : values)
    out.push_back(static_cast<int>(std::count_if(cuts.begin(), cuts.end(),
                                                 [v](double c) { return c < v; })));
  return out;
}

std::vector<std::string> anova_columns(const ModelSpec& model) {
  switch (model.family()) {
    case ModelFamily::DynamicCD: return {"alpha_bar", "beta", "gamma"};
    case ModelFamily::GeneralizedCES: return {"alpha_bar", "omega", "nu", "sigma"};
    case ModelFamily::IntensiveCD: return {"a", "b"};
  }
  return {};
}

double explained_share(std::span<const double> values,
                       const std::vector<std::vector<int>>& factors, int* dof) {
  const auto n = static_cast<Eigen::Index>(values.size());
  if (n == 0) throw DataError("no observations");
  // Dummy columns for every level but the smallest of each factor.
  std::vector<std::vector<int>> levels;
  Eigen::Index cols = 1;
  for (const auto& f : factors) {
    if (static_cast<Eigen::Index>(f.size()) != n) throw ConfigError("factor length mismatch");
    std::vector<int> lv(f.begin(), f.end());
    std::sort(lv.begin(), lv.end());
    lv.erase(std::unique(lv.begin(), lv.end()), lv.end());
    cols += static_cast<Eigen::Index>(lv.size()) - 1;
    levels.push_back(std::move(lv));
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, cols);
  x.col(0).setOnes();
  Eigen::Index c = 1;
  for (std::size_t f = 0; f < factors.size(); ++f) {
    for (std::size_t j = 1; j < levels[f].size(); ++j, ++c)
      for (Eigen::Index i = 0; i < n; ++i)
        if (factors[f][static_cast<std::size_t>(i)] == levels[f][j]) x(i, c) = 1.0;
  }
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(values.data(), n);
  const double mu = y.mean();
  const double tss = (y.array() - mu).square().sum();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (dof) *dof = static_cast<int>(qr.rank()) - 1;
  if (!(tss > 0.0)) return 0.0;
  const Eigen::VectorXd resid = y - x * qr.solve(y);
  return std::clamp(1.0 - resid.squaredNorm() / tss, 0.0, 1.0);
}

AnovaResult anova_decomposition(const std::vector<FirmPosterior>& posteriors,
                                const PanelDataset& data, const ModelSpec& model,
                                AnovaGrouping grouping) {
  check_alignment(posteriors, data);
  if (!data.sector) throw DataError("variance decomposition needs sector codes");
  const std::size_t n = posteriors.size();
  AnovaResult result;
  result.grouping = grouping;

  std::map<std::string, int> codes;
  std::vector<int> sector(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = codes.emplace((*data.sector)[i], static_cast<int>(codes.size()));
    sector[i] = it->second;
  }
  std::vector<std::vector<int>> factors{sector};
  if (grouping != AnovaGrouping::Sector) {
    std::vector<std::vector<int>> size;
    for (const RowMatrix* m : {&data.y, &data.k, &data.l}) {
      std::vector<double> firm_mean(n);
      for (std::size_t i = 0; i < n; ++i) firm_mean[i] = m->row(static_cast<Eigen::Index>(i)).mean();
      std::vector<int> g = decile_groups(firm_mean);
      std::vector<int> present(10, 0);
      for (int v : g) present[static_cast<std::size_t>(v)] = 1;
      result.empty_levels_dropped += static_cast<std::size_t>(10 - std::accumulate(present.begin(), present.end(), 0));
      size.push_back(std::move(g));
    }
    if (grouping == AnovaGrouping::SectorSize) {
      factors.insert(factors.end(), size.begin(), size.end());
    } else {
      std::map<std::array<int, 4>, int> cells;
      std::vector<int> joint(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::array<int, 4> key{sector[i], size[0][i], size[1][i], size[2][i]};
        joint[i] = cells.emplace(key, static_cast<int>(cells.size())).first->second;
      }
      factors = {joint};
    }
  }

  const std::vector<std::string> moment_cols = moment_columns(model);
  for (const std::string& col : anova_columns(model)) {
    const auto idx = static_cast<std::size_t>(
        std::find(moment_cols.begin(), moment_cols.end(), col) - moment_cols.begin());
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = posteriors[i].columns[idx];
    AnovaRow row;
    row.column = col;
    row.explained_share = explained_share(v, factors, &row.degrees_of_freedom);
    result.rows.push_back(row);
  }
  return result;
}

void write_anova_csv(const std::vector<AnovaResult>& results, const std::string& path) {
  std::ostringstream os;
  os << "grouping,column,explained_share,degrees_of_freedom,empty_levels_dropped\n";
  for (const auto& r : results)
    for (const auto& row : r.rows)
      os << grouping_name(r.grouping) << ',' << row.column << ',' << fmt(row.explained_share)
         << ',' << row.degrees_of_freedom << ',' << r.empty_levels_dropped << '\n';
  write_text_file(path, os.str());
}

// ---------------------------------------------------------------------------

std::uint64_t count_concordant_pairs(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (b.size() != n) throw std::invalid_argument("dominance: size mismatch");
  std::vector<double> sorted_b(b.begin(), b.end());
  std::sort(sorted_b.begin(), sorted_b.end());
  sorted_b.erase(std::unique(sorted_b.begin(), sorted_b.end()), sorted_b.end());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a[x] != a[y] ? a[x] < a[y] : x < y;
  });
  std::vector<std::uint64_t> tree(sorted_b.size() + 1, 0);
  auto rank = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(sorted_b.begin(), sorted_b.end(), v) -
                                    sorted_b.begin());
  };
  std::uint64_t concordant = 0;
  std::size_t g = 0;
  while (g < n) {
    // Firms tied in a are never concordant with each other: query the whole
    // tie group before inserting any of it.
    std::size_t end = g;
    while (end < n && a[order[end]] == a[order[g]]) ++end;
    for (std::size_t j = g; j < end; ++j)
      for (std::size_t p = rank(b[order[j]]); p > 0; p -= p & (~p + 1)) concordant += tree[p];
    for (std::size_t j = g; j < end; ++j)
      for (std::size_t p = rank(b[order[j]]) + 1; p < tree.size(); p += p & (~p + 1)) ++tree[p];
    g = end;
  }
  return concordant;
}

DominanceResult dominance_diagnostic(std::span<const double> alpha_bar,
                                     std::span<const double> scale) {
  const std::size_t n = alpha_bar.size();
  if (n < 2 || scale.size() != n) throw ConfigError("dominance diagnostic needs at least two firms");
  DominanceResult r;
  r.firms = n;
  r.pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  r.violating_pairs = count_concordant_pairs(alpha_bar, scale);
  if (n <= kExactDominanceLimit) {
    std::uint64_t exact = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if ((alpha_bar[i] - alpha_bar[j]) * (scale[i] - scale[j]) > 0.0) ++exact;
    if (exact != r.violating_pairs)
      throw std::logic_error("dominance pair counts disagree");
    r.exact_checked = true;
  }
  r.violating_share = static_cast<double>(r.violating_pairs) / static_cast<double>(r.pairs);
  r.correlation = pearson(alpha_bar, scale);
  return r;
}

DominanceResult dominance_diagnostic(const std::vector<FirmPosterior>& posteriors) {
  std::vector<double> a, b;
  for (const auto& fp : posteriors) {
    a.push_back(fp.alpha_bar);
    b.push_back(fp.scale);
  }
  return dominance_diagnostic(a, b);
}

void write_dominance_csv(const DominanceResult& r, const std::string& path) {
  std::ostringstream os;
  os << "firms,pairs,violating_pairs,violating_share,correlation,exact_checked\n"
     << r.firms << ',' << r.pairs << ',' << r.violating_pairs << ',' << fmt(r.violating_share)
     << ',' << fmt(r.correlation) << ',' << (r.exact_checked ? 1 : 0) << '\n';
  write_text_file(path, os.str());
}

}  // namespace hetprod
