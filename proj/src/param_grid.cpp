#include "hetprod/param_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hetprod/baseline_ols.hpp"
#include "hetprod/errors.hpp"
#include "hetprod/stats.hpp"

namespace hetprod {

double GridAxis::value(int j) const {
  if (points <= 1) return min;
  if (j == points - 1) return max;
  return min + (max - min) * static_cast<double>(j) / static_cast<double>(points - 1);
}

std::uint64_t GridSpec::num_types() const {
  std::uint64_t q = 1;
  for (const auto& a : axes) {
    const auto p = static_cast<std::uint64_t>(std::max(a.points, 0));
    if (p != 0 && q > std::numeric_limits<std::uint64_t>::max() / p)
      throw ConfigError("grid has too many configurations");
    q *= p;
  }
  return q;
}

const GridAxis& GridSpec::axis(std::string_view name) const {
  for (const auto& a : axes)
    if (a.name == name) return a;
  throw ConfigError("grid has no axis '" + std::string(name) + "'");
}

GridAxis& GridSpec::axis(std::string_view name) {
  return const_cast<GridAxis&>(std::as_const(*this).axis(name));
}

void GridSpec::validate(const ModelSpec& model) const {
  const auto& names = model.param_names();
  if (axes.size() != names.size())
    throw ConfigError("grid has " + std::to_string(axes.size()) + " axes, model needs " +
                      std::to_string(names.size()));
  for (std::size_t d = 0; d < axes.size(); ++d) {
    const GridAxis& a = axes[d];
    const std::string where = "grid axis '" + a.name + "'";
    if (a.name != names[d])
      throw ConfigError(where + " out of order, expected '" + names[d] + "'");
    if (!std::isfinite(a.min) || !std::isfinite(a.max) || a.min > a.max)
      throw ConfigError(where + " needs finite min <= max");
    if (a.points < 1) throw ConfigError(where + " needs at least one point");
    if (a.points == 1 && a.min != a.max)
      throw ConfigError(where + " has one point, so min must equal max");
    if (a.points > 1 && a.min == a.max)
      throw ConfigError(where + " has several points on an empty range");
  }
  auto require = [&](std::string_view name, bool ok, const char* what) {
    if (!ok) throw ConfigError("grid axis '" + std::string(name) + "' " + what);
  };
  require("s", axis("s").min >= kMinNoiseSd, "must start at or above s_min = 0.05");
  switch (model.family()) {
    case ModelFamily::DynamicCD:
      require("beta", axis("beta").min >= 0.0, "must be nonnegative");
      require("gamma", axis("gamma").min >= 0.0, "must be nonnegative");
      break;
    case ModelFamily::GeneralizedCES: {
      const GridAxis& omega = axis("omega");
      require("omega", omega.min >= 0.0 && omega.max <= 1.0, "must lie in [0, 1]");
      require("nu", axis("nu").min >= 0.0, "must be nonnegative");
      const GridAxis& sigma = axis("sigma");
      require("sigma", sigma.min > 0.0, "must be positive");
      for (int j = 0; j < sigma.points; ++j)
        require("sigma", std::abs(sigma.value(j) - 1.0) >= kSigmaGuard,
                "has a node inside the excluded band around 1");
      break;
    }
    case ModelFamily::IntensiveCD:
      break;
  }
  (void)num_types();
}

std::vector<int> default_points(ModelFamily family) {
  switch (family) {
    case ModelFamily::DynamicCD: return {15, 15, 15, 6, 6, 6};
    case ModelFamily::GeneralizedCES: return {9, 9, 9, 9, 6, 6, 6};
    case ModelFamily::IntensiveCD: return {40, 40, 10};
  }
  return {};
}

namespace {

// [q01 - 2, q99 + 2] of pooled-OLS intercept residuals; [-5, 10] when the
// pooled fit is unavailable.
std::pair<double, double> intercept_range(const ModelSpec& model,
                                          const PanelDataset& data) {
  const FirmOLSEstimate pooled = pooled_ols(data, model);
  if (!pooled.rank_ok) return {-5.0, 10.0};
  std::vector<double> intercepts;
  intercepts.reserve(data.num_observations());
  const auto& c = pooled.coefficients;
  for (std::size_t i = 0; i < data.num_firms(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (int t = 0; t < data.num_periods(); ++t) {
      const double td = t + 1.0;
      double slope_part = 0.0;
      if (model.family() == ModelFamily::IntensiveCD) {
        slope_part = c[1] * data.k(r, t);
      } else {
        slope_part = c[1] * td + c[2] * td * td + c[3] * data.k(r, t) + c[4] * data.l(r, t);
      }
      intercepts.push_back(data.y(r, t) - slope_part);
    }
  }
  return {sample_quantile(intercepts, 0.01) - 2.0, sample_quantile(intercepts, 0.99) + 2.0};
}

void collapse_single_points(GridSpec& grid) {
  for (auto& a : grid.axes) {
    if (a.points == 1) a.min = a.max = 0.5 * (a.min + a.max);
  }
}

// Shifts a sigma axis whose nodes hit the excluded band around 1.
void clear_sigma_band(GridAxis& sigma) {
  for (int attempt = 0; attempt < 4; ++attempt) {
    bool hit = false;
    for (int j = 0; j < sigma.points; ++j)
      hit = hit || std::abs(sigma.value(j) - 1.0) < kSigmaGuard;
    if (!hit) return;
    sigma.min += 2.0 * kSigmaGuard;
    sigma.max += 2.0 * kSigmaGuard;
  }
}

}  // namespace

GridSpec default_grid(const ModelSpec& model, const PanelDataset& data,
                      std::span<const int> points) {
  if (data.num_firms() == 0) throw DataError("cannot build a grid from an empty panel");
  std::vector<int> counts(points.begin(), points.end());
  if (counts.empty()) counts = default_points(model.family());
  if (counts.size() != model.num_params())
    throw ConfigError("expected " + std::to_string(model.num_params()) +
                      " grid point counts, got " + std::to_string(counts.size()));
  {
    std::span<const double> ys(data.y.data(), static_cast<std::size_t>(data.y.size()));
    if (!(sd(ys) > 0.0)) throw DataError("output has zero variance; grid is degenerate");
  }
  const auto [a_lo, a_hi] = intercept_range(model, data);
  GridSpec grid;
  const auto& names = model.param_names();
  for (std::size_t d = 0; d < names.size(); ++d) {
    GridAxis a{names[d], 0.0, 0.0, counts[d]};
    const std::string& n = names[d];
    if (n == "alpha0" || n == "a") {
      a.min = a_lo, a.max = a_hi;
    } else if (n == "beta" || n == "gamma") {
      a.min = 0.0, a.max = 1.5;
    } else if (n == "b") {
      a.min = -0.5, a.max = 1.5;
    } else if (n == "alpha1") {
      a.min = -0.1, a.max = 0.1;
    } else if (n == "alpha2") {
      a.min = -0.01, a.max = 0.01;
    } else if (n == "s") {
      a.min = kMinNoiseSd, a.max = 1.5;
    } else if (n == "omega") {
      a.min = 0.05, a.max = 0.95;
    } else if (n == "nu") {
      a.min = 0.0, a.max = 2.0;
    } else if (n == "sigma") {
      a.min = 0.2, a.max = 6.0;
    }
    grid.axes.push_back(a);
  }
  collapse_single_points(grid);
  if (model.family() == ModelFamily::GeneralizedCES) clear_sigma_band(grid.axis("sigma"));
  grid.validate(model);
  return grid;
}

GridSpec apply_overrides(GridSpec grid,
                         const std::map<std::string, AxisOverride>& overrides,
                         const ModelSpec& model) {
  for (const auto& [name, o] : overrides) {
    GridAxis& a = grid.axis(name);
    if (o.min) a.min = *o.min;
    if (o.max) a.max = *o.max;
    if (o.points) a.points = *o.points;
    if (a.points == 1 && !(o.min && o.max)) a.min = a.max = 0.5 * (a.min + a.max);
  }
  grid.validate(model);
  return grid;
}

TypeTable::TypeTable(const ModelSpec& model, GridSpec grid)
    : model_(model), grid_(std::move(grid)) {
  grid_.validate(model_);
  num_types_ = grid_.num_types();
  const std::size_t dims = grid_.axes.size();
  values_.resize(dims);
  strides_.assign(dims, 1);
  for (std::size_t d = 0; d < dims; ++d) {
    const GridAxis& a = grid_.axes[d];
    for (int j = 0; j < a.points; ++j) values_[d].push_back(a.value(j));
  }
  for (std::size_t d = dims - 1; d > 0; --d)
    strides_[d - 1] = strides_[d] * static_cast<std::uint64_t>(values_[d].size());
}

std::vector<int> TypeTable::decode(std::uint64_t q) const {
  if (q >= num_types_) throw std::out_of_range("type index out of range");
  std::vector<int> idx(values_.size());
  for (std::size_t d = 0; d < values_.size(); ++d)
    idx[d] = static_cast<int>((q / strides_[d]) % values_[d].size());
  return idx;
}

std::uint64_t TypeTable::encode(std::span<const int> index) const {
  if (index.size() != values_.size()) throw std::out_of_range("index tuple length");
  std::uint64_t q = 0;
  for (std::size_t d = 0; d < values_.size(); ++d) {
    if (index[d] < 0 || static_cast<std::size_t>(index[d]) >= values_[d].size())
      throw std::out_of_range("index tuple entry out of range");
    q += static_cast<std::uint64_t>(index[d]) * strides_[d];
  }
  return q;
}

ParamVector TypeTable::enumerate_type(std::uint64_t q) const {
  if (q >= num_types_) throw std::out_of_range("type index out of range");
  ParamVector p(values_.size());
  for (std::size_t d = 0; d < values_.size(); ++d) p[d] = value(q, d);
  return p;
}

}  // namespace hetprod
