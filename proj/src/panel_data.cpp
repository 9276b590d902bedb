#include "hetprod/panel_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include "hetprod/errors.hpp"
#include "hetprod/io.hpp"
#include "hetprod/stats.hpp"

namespace hetprod {

void PanelDataset::validate() const {
  const auto n = static_cast<Eigen::Index>(firm_ids.size());
  if (n < 1) throw DataError("panel has no firms");
  if (y.cols() < 2) throw DataError("panel needs at least two periods");
  if (y.rows() != n || k.rows() != n || l.rows() != n || k.cols() != y.cols() ||
      l.cols() != y.cols())
    throw DataError("panel matrices are not I x T");
  if (!y.allFinite() || !k.allFinite() || !l.allFinite())
    throw DataError("panel contains non-finite y, k or l");
  if (sector && sector->size() != firm_ids.size())
    throw DataError("sector column length mismatch");
  if (wage_share) {
    if (wage_share->rows() != n || wage_share->cols() != y.cols())
      throw DataError("wage share matrix is not I x T");
    if (!wage_share->allFinite() || (wage_share->array() <= 0.0).any())
      throw DataError("wage shares must be finite and strictly positive");
  }
}

PanelDataset PanelDataset::select_firms(const std::vector<std::size_t>& rows) const {
  PanelDataset out;
  out.first_year = first_year;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.y.resize(n, y.cols());
  out.k.resize(n, y.cols());
  out.l.resize(n, y.cols());
  if (sector) out.sector.emplace();
  if (wage_share) out.wage_share.emplace(n, y.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto src = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    out.firm_ids.push_back(firm_ids[static_cast<std::size_t>(src)]);
    out.y.row(r) = y.row(src);
    out.k.row(r) = k.row(src);
    out.l.row(r) = l.row(src);
    if (sector) out.sector->push_back((*sector)[static_cast<std::size_t>(src)]);
    if (wage_share) out.wage_share->row(r) = wage_share->row(src);
  }
  return out;
}

namespace {

struct FirmRows {
  std::map<int, std::size_t> by_year;  // year -> table row
};

int parse_year(const std::string& cell) {
  const double v = parse_cell(cell);
  if (!std::isfinite(v) || v != std::round(v))
    throw DataError("invalid year '" + cell + "'");
  return static_cast<int>(v);
}

}  // namespace

LoadedPanel load_panel(const std::string& path, const ColumnMap& columns,
                       const LoadOptions& options) {
  const DelimitedTable table = read_delimited(path);
  const std::size_t c_firm = table.column(columns.firm);
  const std::size_t c_year = table.column(columns.year);
  const std::size_t c_y = table.column(columns.output);
  const std::size_t c_k = table.column(columns.capital);
  const std::size_t c_l = table.column(columns.labor);
  std::optional<std::size_t> c_sector, c_share, c_wage, c_rev;
  if (columns.sector) c_sector = table.column(*columns.sector);
  if (columns.wage_share) {
    c_share = table.column(*columns.wage_share);
  } else if (columns.wage_bill || columns.revenue) {
    if (!columns.wage_bill || !columns.revenue)
      throw ConfigError("wage bill and revenue columns must be given together");
    c_wage = table.column(*columns.wage_bill);
    c_rev = table.column(*columns.revenue);
  }
  const bool want_share = c_share || c_wage;

  LoadedPanel result;
  result.report.rows_read = table.rows.size();

  std::vector<std::string> order;
  std::unordered_map<std::string, FirmRows> firms;
  int lo = std::numeric_limits<int>::max();
  int hi = std::numeric_limits<int>::min();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const int year = parse_year(row[c_year]);
    if (options.year_min && year < *options.year_min) continue;
    if (options.year_max && year > *options.year_max) continue;
    auto [it, inserted] = firms.try_emplace(row[c_firm]);
    if (inserted) order.push_back(row[c_firm]);
    if (!it->second.by_year.emplace(year, r).second)
      throw DataError("duplicate observation for firm '" + row[c_firm] +
                      "' year " + std::to_string(year));
    lo = std::min(lo, year);
    hi = std::max(hi, year);
  }
  if (order.empty()) throw DataError("no observations in '" + path + "'");
  if (options.year_min) lo = *options.year_min;
  if (options.year_max) hi = *options.year_max;
  const int periods = hi - lo + 1;
  if (periods < 2) throw DataError("panel window has fewer than two periods");
  result.report.firms_seen = order.size();

  auto value = [&](const std::vector<std::string>& row, std::size_t col) {
    const double v = parse_cell(row[col]);
    if (!options.log_transform || std::isnan(v)) return v;
    if (!(v > 0.0))
      throw DataError("nonpositive value '" + row[col] + "' in column '" +
                      table.header[col] + "' cannot be log-transformed");
    return std::log(v);
  };

  std::vector<std::array<std::vector<double>, 4>> kept;
  std::vector<std::string> kept_ids, kept_sectors;
  for (const auto& id : order) {
    const FirmRows& fr = firms.at(id);
    bool complete = static_cast<int>(fr.by_year.size()) == periods;
    std::array<std::vector<double>, 4> cells;
    std::string sector_value;
    bool sector_changed = false;
    for (int t = 0; complete && t < periods; ++t) {
      auto it = fr.by_year.find(lo + t);
      if (it == fr.by_year.end()) {
        complete = false;
        break;
      }
      const auto& row = table.rows[it->second];
      const double yv = value(row, c_y), kv = value(row, c_k), lv = value(row, c_l);
      double share = 1.0;
      if (c_share) {
        share = parse_cell(row[*c_share]);
      } else if (c_wage) {
        share = parse_cell(row[*c_wage]) / parse_cell(row[*c_rev]);
      }
      if (!std::isfinite(yv) || !std::isfinite(kv) || !std::isfinite(lv) ||
          (want_share && !std::isfinite(share))) {
        complete = false;
        break;
      }
      if (want_share && !(share > 0.0))
        throw DataError("nonpositive labor share for firm '" + id + "'");
      cells[0].push_back(yv);
      cells[1].push_back(kv);
      cells[2].push_back(lv);
      cells[3].push_back(share);
      if (c_sector) {
        const std::string& s = row[*c_sector];
        if (t == 0) {
          sector_value = s;
        } else if (s != sector_value) {
          sector_changed = true;
        }
      }
    }
    if (!complete) {
      ++result.report.firms_dropped;
      continue;
    }
    if (sector_changed) {
      ++result.report.firms_dropped_sector_change;
      continue;
    }
    kept.push_back(std::move(cells));
    kept_ids.push_back(id);
    kept_sectors.push_back(sector_value);
  }
  if (kept.empty()) throw DataError("no firm survives balancing in '" + path + "'");

  PanelDataset& d = result.data;
  const auto n = static_cast<Eigen::Index>(kept.size());
  d.first_year = lo;
  d.firm_ids = std::move(kept_ids);
  d.y.resize(n, periods);
  d.k.resize(n, periods);
  d.l.resize(n, periods);
  if (want_share) d.wage_share.emplace(n, periods);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& cells = kept[static_cast<std::size_t>(i)];
    for (int t = 0; t < periods; ++t) {
      const auto ut = static_cast<std::size_t>(t);
      d.y(i, t) = cells[0][ut];
      d.k(i, t) = cells[1][ut];
      d.l(i, t) = cells[2][ut];
      if (want_share) (*d.wage_share)(i, t) = cells[3][ut];
    }
  }
  if (c_sector) d.sector = std::move(kept_sectors);
  d.validate();
  return result;
}

void write_panel_csv(const PanelDataset& data, const std::string& path) {
  std::ostringstream out;
  out << "firm_id,t,y,k,l";
  if (data.sector) out << ",sector";
  if (data.wage_share) out << ",wage_share";
  out << '\n';
  for (std::size_t i = 0; i < data.num_firms(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int t = 0; t < data.num_periods(); ++t) {
      out << data.firm_ids[i] << ',' << (t + 1) << ',' << format_double(data.y(r, t))
          << ',' << format_double(data.k(r, t)) << ',' << format_double(data.l(r, t));
      if (data.sector) out << ',' << (*data.sector)[i];
      if (data.wage_share) out << ',' << format_double((*data.wage_share)(r, t));
      out << '\n';
    }
  }
  write_text_file(path, out.str());
}

ColumnMap canonical_columns(const PanelDataset& data) {
  ColumnMap c;
  if (data.sector) c.sector = "sector";
  if (data.wage_share) c.wage_share = "wage_share";
  return c;
}

PanelDataset quantile_trim(const PanelDataset& data, double lower, double upper) {
  if (!(lower >= 0.0 && lower < upper && upper <= 1.0))
    throw ConfigError("quantile band must satisfy 0 <= lower < upper <= 1");
  std::array<std::pair<double, double>, 3> bands;
  const std::array<const RowMatrix*, 3> vars{&data.y, &data.k, &data.l};
  for (std::size_t v = 0; v < 3; ++v) {
    std::span<const double> pooled(vars[v]->data(), static_cast<std::size_t>(vars[v]->size()));
    bands[v] = {sample_quantile(pooled, lower), sample_quantile(pooled, upper)};
  }
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < data.num_firms(); ++i) {
    bool inside = true;
    for (std::size_t v = 0; v < 3 && inside; ++v) {
      const auto row = vars[v]->row(static_cast<Eigen::Index>(i));
      inside = row.minCoeff() >= bands[v].first && row.maxCoeff() <= bands[v].second;
    }
    if (inside) keep.push_back(i);
  }
  if (keep.empty()) throw DataError("quantile band excludes every firm");
  return data.select_firms(keep);
}

PanelDataset to_intensive(const PanelDataset& data) {
  PanelDataset out = data;
  out.y = data.y - data.l;
  out.k = data.k - data.l;
  return out;
}

}  // namespace hetprod
