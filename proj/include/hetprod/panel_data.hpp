#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hetprod {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Balanced firm panel in logs. Rows are firms, columns are periods t = 1..T.
struct PanelDataset {
  std::vector<std::string> firm_ids;
  int first_year = 1;  // calendar year mapped to t = 1
  RowMatrix y;         // log output (value added)
  RowMatrix k;         // log capital
  RowMatrix l;         // log labor
  std::optional<std::vector<std::string>> sector;
  std::optional<RowMatrix> wage_share;  // labor share of revenue, > 0

  std::size_t num_firms() const { return firm_ids.size(); }
  int num_periods() const { return static_cast<int>(y.cols()); }
  std::size_t num_observations() const {
    return num_firms() * static_cast<std::size_t>(num_periods());
  }

  // Throws DataError when any dataset invariant is violated.
  void validate() const;

  // Subset of firms, in the given order.
  PanelDataset select_firms(const std::vector<std::size_t>& rows) const;
};

/// Mapping from canonical fields to column names in the source file.
struct ColumnMap {
  std::string firm = "firm_id";
  std::string year = "t";
  std::string output = "y";
  std::string capital = "k";
  std::string labor = "l";
  std::optional<std::string> sector;
  // Either a direct share column or a wage bill / revenue pair.
  std::optional<std::string> wage_share;
  std::optional<std::string> wage_bill;
  std::optional<std::string> revenue;
};

struct LoadOptions {
  bool log_transform = false;
  std::optional<int> year_min;
  std::optional<int> year_max;
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t firms_seen = 0;
  std::size_t firms_dropped = 0;  // incomplete in the window
  std::size_t firms_dropped_sector_change = 0;
};

struct LoadedPanel {
  PanelDataset data;
  LoadReport report;
};

/// Reads a comma or tab separated file with a header row. Firms with any
/// missing cell in the requested year window are dropped and counted.
LoadedPanel load_panel(const std::string& path, const ColumnMap& columns,
                       const LoadOptions& options = {});

/// Writes the canonical serialization: firm_id,t,y,k,l[,sector,wage_share].
void write_panel_csv(const PanelDataset& data, const std::string& path);

/// Column map matching write_panel_csv output.
ColumnMap canonical_columns(const PanelDataset& data);

/// Drops every firm having any y, k or l observation outside the pooled
/// [lower, upper] quantile band of that variable.
PanelDataset quantile_trim(const PanelDataset& data, double lower, double upper);

/// Per-worker transform: y <- y - l, k <- k - l. The labor matrix is kept so
/// that labor-based analytics stay available.
PanelDataset to_intensive(const PanelDataset& data);

}  // namespace hetprod
