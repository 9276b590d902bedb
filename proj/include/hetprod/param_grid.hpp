#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetprod/model_family.hpp"
#include "hetprod/panel_data.hpp"

namespace hetprod {

struct GridAxis {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  int points = 1;

  // Equally spaced node j in [0, points); the last node is exactly max.
  double value(int j) const;
  double spacing() const { return points > 1 ? (max - min) / (points - 1) : 0.0; }
};

struct GridSpec {
  std::vector<GridAxis> axes;

  std::uint64_t num_types() const;
  const GridAxis& axis(std::string_view name) const;
  GridAxis& axis(std::string_view name);
  // Throws ConfigError unless the axes match the model and respect the
  // admissibility bounds of every parameter.
  void validate(const ModelSpec& model) const;
};

struct AxisOverride {
  std::optional<double> min;
  std::optional<double> max;
  std::optional<int> points;
};

std::vector<int> default_points(ModelFamily family);

/// Data-adaptive default grid. An empty `points` selects the family defaults.
GridSpec default_grid(const ModelSpec& model, const PanelDataset& data,
                      std::span<const int> points = {});

GridSpec apply_overrides(GridSpec grid,
                         const std::map<std::string, AxisOverride>& overrides,
                         const ModelSpec& model);

/// Lexicographic enumeration of all grid configurations (last axis fastest).
/// Values are produced on demand; no Q-sized table is stored.
class TypeTable {
 public:
  TypeTable(const ModelSpec& model, GridSpec grid);

  std::uint64_t size() const { return num_types_; }
  std::size_t dims() const { return values_.size(); }
  const GridSpec& grid() const { return grid_; }
  const ModelSpec& model() const { return model_; }
  std::span<const double> axis_values(std::size_t dim) const { return values_[dim]; }
  std::uint64_t stride(std::size_t dim) const { return strides_[dim]; }

  std::vector<int> decode(std::uint64_t q) const;
  std::uint64_t encode(std::span<const int> index) const;
  double value(std::uint64_t q, std::size_t dim) const {
    return values_[dim][static_cast<std::size_t>((q / strides_[dim]) %
                                                 values_[dim].size())];
  }
  ParamVector enumerate_type(std::uint64_t q) const;

 private:
  ModelSpec model_;
  GridSpec grid_;
  std::vector<std::vector<double>> values_;
  std::vector<std::uint64_t> strides_;
  std::uint64_t num_types_ = 0;
};

}  // namespace hetprod
