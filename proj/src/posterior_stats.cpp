#include "hetprod/posterior_stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "hetprod/errors.hpp"
#include "hetprod/io.hpp"
#include "hetprod/stats.hpp"

namespace hetprod {

std::vector<std::string> moment_columns(const ModelSpec& model) {
  std::vector<std::string> cols = model.param_names();
  if (model.has_dynamics()) cols.emplace_back("alpha_bar");
  cols.emplace_back("scale");
  return cols;
}

namespace {

std::vector<std::uint64_t> support_of(const MixingDistribution& pi) {
  std::vector<std::uint64_t> support = pi.support;
  if (support.empty())
    for (std::size_t q = 0; q < pi.weights.size(); ++q)
      if (pi.weights[q] > 0.0) support.push_back(q);
  if (support.empty()) throw ConfigError("mixing distribution has empty support");
  return support;
}

Eigen::MatrixXd correlation_matrix(const std::vector<std::vector<double>>& cols,
                                   std::span<const double> weights) {
  const std::size_t c = cols.size();
  const std::size_t n = cols.empty() ? 0 : cols[0].size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += weights.empty() ? 1.0 : weights[i];
  std::vector<double> mu(c, 0.0);
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t i = 0; i < n; ++i) mu[a] += (weights.empty() ? 1.0 : weights[i]) * cols[a][i];
    mu[a] /= total;
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c),
                                              static_cast<Eigen::Index>(c));
  for (std::size_t a = 0; a < c; ++a)
    for (std::size_t b = a; b < c; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        s += (weights.empty() ? 1.0 : weights[i]) * (cols[a][i] - mu[a]) * (cols[b][i] - mu[b]);
      cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = s / total;
    }
  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(c),
                                                   static_cast<Eigen::Index>(c));
  for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(c); ++a)
    for (Eigen::Index b = a + 1; b < static_cast<Eigen::Index>(c); ++b) {
      const double va = cov(a, a), vb = cov(b, b);
      double r = 0.0;
      // Constant columns (relative to their magnitude) carry no correlation.
      if (va > 1e-24 && vb > 1e-24) r = std::clamp(cov(a, b) / std::sqrt(va * vb), -1.0, 1.0);
      corr(a, b) = corr(b, a) = r;
    }
  return corr;
}

std::string fmt(double v) { return format_double(v); }

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

std::vector<double> type_columns(const TypeTable& table, std::uint64_t q) {
  const ModelSpec& model = table.model();
  const ParamVector p = table.enumerate_type(q);
  std::vector<double> out = p.values();
  if (model.has_dynamics()) out.push_back(time_avg_intercept(model, p));
  out.push_back(returns_to_scale(model, p));
  return out;
}

std::vector<FirmPosterior> firm_posteriors(const DensitySource& source,
                                           const MixingDistribution& pi,
                                           const TypeTable& table,
                                           const std::vector<std::string>& firm_ids) {
  if (pi.weights.size() != table.size() || source.num_types() != table.size())
    throw ConfigError("mixing distribution, density source and type table disagree on Q");
  if (firm_ids.size() != source.num_firms())
    throw ConfigError("firm id list does not match the density source");
  const ModelSpec& model = table.model();
  const std::size_t num_params = model.num_params();
  const std::vector<std::uint64_t> support = support_of(pi);
  const std::size_t ns = support.size();
  const std::size_t nc = moment_columns(model).size();
  const std::size_t ab_col = model.has_dynamics() ? num_params : intensive::kA;

  std::vector<std::vector<double>> values(ns);
  std::vector<double> w(ns);
  for (std::size_t j = 0; j < ns; ++j) {
    values[j] = type_columns(table, support[j]);
    w[j] = pi.weights[static_cast<std::size_t>(support[j])];
  }

  const std::size_t firms = source.num_firms();
  std::vector<FirmPosterior> out(firms);
  std::string failure;
#pragma omp parallel for schedule(dynamic, 8)
  for (long long ii = 0; ii < static_cast<long long>(firms); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      std::vector<double> logf(ns);
      for (std::size_t j = 0; j < ns; ++j) logf[j] = source.log_density(i, support[j]);
      const std::vector<double> h = posterior_row(logf, w);
      std::vector<double> mean(nc, 0.0), sd(nc, 0.0);
      std::size_t top = 0;
      for (std::size_t j = 0; j < ns; ++j) {
        if (h[j] > h[top]) top = j;
        for (std::size_t c = 0; c < nc; ++c) mean[c] += h[j] * values[j][c];
      }
      for (std::size_t j = 0; j < ns; ++j)
        for (std::size_t c = 0; c < nc; ++c) {
          const double d = values[j][c] - mean[c];
          sd[c] += h[j] * d * d;
        }
      for (double& v : sd) v = std::sqrt(v);
      FirmPosterior& fp = out[i];
      fp.firm_id = firm_ids[i];
      fp.expected_params = ParamVector(std::vector<double>(mean.begin(), mean.begin() +
                                                           static_cast<long>(num_params)));
      fp.posterior_sd.assign(sd.begin(), sd.begin() + static_cast<long>(num_params));
      fp.top_type = support[top];
      fp.alpha_bar = mean[ab_col];
      fp.alpha_bar_sd = sd[ab_col];
      fp.scale = mean[nc - 1];
      fp.scale_sd = sd[nc - 1];
      fp.columns = std::move(mean);
    } catch (const std::exception& e) {
#pragma omp critical(posterior_failure)
      if (failure.empty()) failure = "firm " + firm_ids[i] + ": " + e.what();
    }
  }
  if (!failure.empty()) throw DataError(failure);
  return out;
}

std::vector<std::vector<double>> posterior_columns(const std::vector<FirmPosterior>& posteriors) {
  if (posteriors.empty()) return {};
  std::vector<std::vector<double>> cols(posteriors[0].columns.size());
  for (auto& c : cols) c.reserve(posteriors.size());
  for (const auto& fp : posteriors)
    for (std::size_t c = 0; c < cols.size(); ++c) cols[c].push_back(fp.columns[c]);
  return cols;
}

std::size_t PopulationMoments::index(std::string_view column) const {
  for (std::size_t c = 0; c < columns.size(); ++c)
    if (columns[c] == column) return c;
  throw ConfigError("unknown moment column: " + std::string(column));
}

PopulationMoments population_moments(const MixingDistribution& pi, const TypeTable& table) {
  const std::vector<std::uint64_t> support = support_of(pi);
  PopulationMoments m;
  m.source = "mixture";
  m.columns = moment_columns(table.model());
  const std::size_t nc = m.columns.size();
  std::vector<std::vector<double>> cols(nc, std::vector<double>(support.size()));
  std::vector<double> w(support.size());
  double total = 0.0;
  for (std::size_t j = 0; j < support.size(); ++j) {
    const std::vector<double> v = type_columns(table, support[j]);
    for (std::size_t c = 0; c < nc; ++c) cols[c][j] = v[c];
    w[j] = pi.weights[static_cast<std::size_t>(support[j])];
    total += w[j];
  }
  for (std::size_t c = 0; c < nc; ++c) {
    double mu = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) mu += w[j] * cols[c][j];
    mu /= total;
    double var = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) var += w[j] * (cols[c][j] - mu) * (cols[c][j] - mu);
    m.mean.push_back(mu);
    m.sd.push_back(std::sqrt(var / total));
    m.p10.push_back(weighted_lower_quantile(cols[c], w, 0.1));
    m.p50.push_back(weighted_lower_quantile(cols[c], w, 0.5));
    m.p90.push_back(weighted_lower_quantile(cols[c], w, 0.9));
  }
  m.correlation = correlation_matrix(cols, w);
  return m;
}

PopulationMoments posterior_mean_moments(const std::vector<FirmPosterior>& posteriors,
                                         const ModelSpec& model) {
  if (posteriors.empty()) throw ConfigError("no firm posteriors");
  PopulationMoments m;
  m.source = "posterior_means";
  m.columns = moment_columns(model);
  const auto cols = posterior_columns(posteriors);
  for (const auto& c : cols) {
    m.mean.push_back(mean(c));
    m.sd.push_back(sd(c));
    m.p10.push_back(sample_quantile(c, 0.1));
    m.p50.push_back(sample_quantile(c, 0.5));
    m.p90.push_back(sample_quantile(c, 0.9));
  }
  m.correlation = correlation_matrix(cols, {});
  return m;
}

bool is_intercept_column(std::string_view column) {
  return column == "alpha0" || column == "alpha_bar" || column == "a";
}

std::vector<DispersionRow> dispersion_table(const PopulationMoments& moments) {
  if (moments.columns.empty()) throw ConfigError("empty moments");
  std::vector<DispersionRow> rows;
  for (std::size_t c = 0; c < moments.columns.size(); ++c) {
    DispersionRow r;
    r.column = moments.columns[c];
    r.median = moments.p50[c];
    r.sd = moments.sd[c];
    const double lo = moments.p10[c], hi = moments.p90[c];
    if (is_intercept_column(r.column)) {
      r.p90_p10 = std::exp(hi - lo);
    } else if (lo == 0.0) {
      r.p90_p10 = std::numeric_limits<double>::infinity();
      r.flagged = true;
    } else {
      r.p90_p10 = hi / lo;
      r.flagged = lo < 0.0;
    }
    rows.push_back(r);
  }
  return rows;
}

void write_posteriors_csv(const std::vector<FirmPosterior>& posteriors,
                          const ModelSpec& model, const std::string& path) {
  std::ostringstream os;
  os << "firm_id";
  for (const auto& n : model.param_names()) os << ',' << n;
  for (const auto& n : model.param_names()) os << ",sd_" << n;
  os << ",alpha_bar,sd_alpha_bar,scale,sd_scale,top_type\n";
  for (const auto& fp : posteriors) {
    os << fp.firm_id;
    for (double v : fp.expected_params.values()) os << ',' << fmt(v);
    for (double v : fp.posterior_sd) os << ',' << fmt(v);
    os << ',' << fmt(fp.alpha_bar) << ',' << fmt(fp.alpha_bar_sd) << ',' << fmt(fp.scale)
       << ',' << fmt(fp.scale_sd) << ',' << fp.top_type << '\n';
  }
  write_text_file(path, os.str());
}

std::vector<FirmPosterior> read_posteriors_csv(const std::string& path, const ModelSpec& model) {
  const DelimitedTable t = read_delimited(path);
  const auto& names = model.param_names();
  std::vector<std::size_t> mean_col, sd_col;
  for (const auto& n : names) {
    mean_col.push_back(t.column(n));
    sd_col.push_back(t.column("sd_" + n));
  }
  const std::size_t id = t.column("firm_id"), ab = t.column("alpha_bar"),
                    ab_sd = t.column("sd_alpha_bar"), sc = t.column("scale"),
                    sc_sd = t.column("sd_scale"), top = t.column("top_type");
  std::vector<FirmPosterior> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    FirmPosterior fp;
    fp.firm_id = row[id];
    fp.expected_params = ParamVector(names.size());
    fp.posterior_sd.resize(names.size());
    for (std::size_t d = 0; d < names.size(); ++d) {
      fp.expected_params[d] = parse_cell(row[mean_col[d]]);
      fp.posterior_sd[d] = parse_cell(row[sd_col[d]]);
    }
    fp.alpha_bar = parse_cell(row[ab]);
    fp.alpha_bar_sd = parse_cell(row[ab_sd]);
    fp.scale = parse_cell(row[sc]);
    fp.scale_sd = parse_cell(row[sc_sd]);
    fp.top_type = std::stoull(row[top]);
    fp.columns = fp.expected_params.values();
    if (model.has_dynamics()) fp.columns.push_back(fp.alpha_bar);
    fp.columns.push_back(fp.scale);
    out.push_back(std::move(fp));
  }
  return out;
}

void write_pi_star_csv(const MixingDistribution& pi, const TypeTable& table,
                       const std::string& path) {
  std::ostringstream os;
  os << "type";
  for (const auto& n : table.model().param_names()) os << ',' << n;
  os << ",weight\n";
  for (std::size_t q = 0; q < pi.weights.size(); ++q) {
    if (!(pi.weights[q] > 0.0)) continue;
    os << q;
    const ParamVector params = table.enumerate_type(q);
    for (double v : params.values()) os << ',' << fmt(v);
    os << ',' << fmt(pi.weights[q]) << '\n';
  }
  write_text_file(path, os.str());
}

void write_dispersion_csv(const std::vector<DispersionRow>& rows, const std::string& label,
                          const std::string& path) {
  std::ostringstream os;
  os << "source,column,median,sd,p90_p10,flagged\n";
  for (const auto& r : rows)
    os << label << ',' << r.column << ',' << fmt(r.median) << ',' << fmt(r.sd) << ','
       << fmt(r.p90_p10) << ',' << (r.flagged ? 1 : 0) << '\n';
  write_text_file(path, os.str());
}

void write_correlation_csv(const PopulationMoments& moments, const std::string& path) {
  std::ostringstream os;
  os << "column";
  for (const auto& c : moments.columns) os << ',' << c;
  os << '\n';
  for (Eigen::Index a = 0; a < moments.correlation.rows(); ++a) {
    os << moments.columns[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < moments.correlation.cols(); ++b)
      os << ',' << fmt(moments.correlation(a, b));
    os << '\n';
  }
  write_text_file(path, os.str());
}

std::string svg_histogram(const std::vector<HistogramSeries>& series, const std::string& title) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series)
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = 640, height = 400, left = 50, right = 20, top = 40, bottom = 50;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const double bin_w = (hi - lo) / kHistogramBins;

  std::vector<std::vector<double>> shares;
  double peak = 0.0;
  for (const auto& s : series) {
    std::vector<double> h(kHistogramBins, 0.0);
    double mass = 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const double v = s.values[i];
      if (!std::isfinite(v)) continue;
      const double w = s.weights.empty() ? 1.0 : s.weights[i];
      int b = static_cast<int>(std::floor((v - lo) / bin_w));
      b = std::clamp(b, 0, kHistogramBins - 1);
      h[static_cast<std::size_t>(b)] += w;
      mass += w;
    }
    if (mass > 0.0)
      for (double& x : h) x /= mass;
    peak = std::max(peak, *std::max_element(h.begin(), h.end()));
    shares.push_back(std::move(h));
  }
  if (peak <= 0.0) peak = 1.0;

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << title << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
     << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (std::size_t s = 0; s < shares.size(); ++s) {
    const char* color = kColors[s % 4];
    for (int b = 0; b < kHistogramBins; ++b) {
      const double hgt = shares[s][static_cast<std::size_t>(b)] / peak * plot_h;
      if (hgt <= 0.0) continue;
      os << "<rect x=\"" << svg_num(left + b * plot_w / kHistogramBins) << "\" y=\""
         << svg_num(top + plot_h - hgt) << "\" width=\"" << svg_num(plot_w / kHistogramBins)
         << "\" height=\"" << svg_num(hgt) << "\" fill=\"" << color
         << "\" fill-opacity=\"0.5\" stroke=\"" << color << "\"/>\n";
    }
    os << "<text x=\"" << left + plot_w - 150 << "\" y=\"" << top + 16 * (s + 1)
       << "\" font-size=\"12\" fill=\"" << color << "\">" << series[s].label << "</text>\n";
  }
  for (int tick = 0; tick <= 4; ++tick) {
    const double x = left + tick * plot_w / 4;
    os << "<text x=\"" << svg_num(x) << "\" y=\"" << top + plot_h + 18
       << "\" text-anchor=\"middle\" font-size=\"11\">" << label_num(lo + tick * (hi - lo) / 4)
       << "</text>\n";
  }
  os << "<text x=\"12\" y=\"" << top + plot_h / 2 << "\" font-size=\"11\" transform=\"rotate(-90 12 "
     << top + plot_h / 2 << ")\">share (max " << label_num(peak) << ")</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace hetprod
