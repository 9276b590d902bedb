#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "hetprod/model_family.hpp"
#include "hetprod/panel_data.hpp"
#include "hetprod/param_grid.hpp"

namespace hetprod {

/// Exact log of the Gaussian panel density of firm i under `params`:
/// sum_t [-ln s - ln(2 pi)/2 - ((y_it - h_it)/s)^2 / 2]. Evaluated period by
/// period through mean_output.
double log_density_firm_type(const ModelSpec& model, const PanelDataset& data,
                             std::size_t firm, const ParamVector& params);

/// Source of log f_iq rows consumed by the solver and posterior code.
class DensitySource {
 public:
  virtual ~DensitySource() = default;
  virtual std::size_t num_firms() const = 0;
  virtual std::uint64_t num_types() const = 0;
  // Writes log f_iq for q in [q_begin, q_end) into out.
  virtual void fill_row(std::size_t firm, std::uint64_t q_begin, std::uint64_t q_end,
                        std::span<double> out) const = 0;

  double log_density(std::size_t firm, std::uint64_t q) const {
    double v = 0.0;
    fill_row(firm, q, q + 1, {&v, 1});
    return v;
  }
};

/// Densities computed on demand from the model, panel and type table.
/// Linear families use cached per-firm centered moments so a cell costs O(1);
/// CES cells cost O(T).
class ModelDensity final : public DensitySource {
 public:
  ModelDensity(const ModelSpec& model, const PanelDataset& data, const TypeTable& table);

  std::size_t num_firms() const override { return num_firms_; }
  std::uint64_t num_types() const override { return table_.size(); }
  void fill_row(std::size_t firm, std::uint64_t q_begin, std::uint64_t q_end,
                std::span<double> out) const override;

  const TypeTable& table() const { return table_; }

 private:
  struct LinearMoments {
    double y_mean = 0.0;
    double yy = 0.0;               // centered sum of squares of y
    std::array<double, 4> x_mean{};
    std::array<double, 4> xy{};    // centered cross-products with y
    std::array<double, 16> xx{};   // centered cross-products, row-major
  };

  void fill_linear(std::size_t firm, std::uint64_t q_begin, std::uint64_t q_end,
                   std::span<double> out) const;
  void fill_ces(std::size_t firm, std::uint64_t q_begin, std::uint64_t q_end,
                std::span<double> out) const;

  ModelSpec model_;
  const PanelDataset* data_;
  TypeTable table_;
  std::size_t num_firms_;
  int periods_;
  std::size_t num_slopes_;  // linear regressors besides the intercept
  std::vector<LinearMoments> moments_;
  std::vector<double> log_norm_;    // per s node: -T ln s - T ln(2 pi) / 2
  std::vector<double> inv_two_var_; // per s node: 1 / (2 s^2)
};

/// Explicit log-density matrix (tests, cached runs).
class MatrixDensity final : public DensitySource {
 public:
  explicit MatrixDensity(RowMatrix log_f) : log_f_(std::move(log_f)) {}
  std::size_t num_firms() const override { return static_cast<std::size_t>(log_f_.rows()); }
  std::uint64_t num_types() const override { return static_cast<std::uint64_t>(log_f_.cols()); }
  void fill_row(std::size_t firm, std::uint64_t q_begin, std::uint64_t q_end,
                std::span<double> out) const override;
  const RowMatrix& matrix() const { return log_f_; }

 private:
  RowMatrix log_f_;
};

struct LogDensityBlock {
  std::size_t firm_begin = 0;
  std::size_t firm_end = 0;
  std::uint64_t type_begin = 0;
  std::uint64_t type_end = 0;
  std::vector<double> values;  // row-major (firms x types)

  std::size_t firms() const { return firm_end - firm_begin; }
  std::size_t types() const { return static_cast<std::size_t>(type_end - type_begin); }
  double at(std::size_t i, std::size_t j) const { return values[i * types() + j]; }
};

struct BlockShape {
  std::size_t firms = 64;
  std::size_t types = 4096;
};

/// Tiling of the I x Q log-density matrix into independent blocks. Blocks
/// can be computed in any order and from any thread.
class BlockedLikelihood {
 public:
  BlockedLikelihood(const DensitySource& source, BlockShape shape,
                    std::size_t memory_budget_bytes);

  std::size_t num_blocks() const { return firm_blocks_ * type_blocks_; }
  LogDensityBlock block(std::size_t index) const;
  // Computes every block (in parallel) and hands it to `sink`; calls to
  // `sink` are serialized but arrive in no particular order.
  void for_each_block(const std::function<void(LogDensityBlock&&)>& sink) const;

 private:
  const DensitySource* source_;
  BlockShape shape_;
  std::size_t firm_blocks_;
  std::size_t type_blocks_;
};

/// Streams `source` into `path` as a little-endian binary matrix of doubles
/// with a header carrying I, Q, T and hashes of the model, grid and data.
struct CacheKey {
  std::uint64_t periods = 0;
  std::uint64_t model_hash = 0;
  std::uint64_t grid_hash = 0;
  std::uint64_t data_hash = 0;
};

CacheKey cache_key(const ModelSpec& model, const GridSpec& grid, const PanelDataset& data);
void write_density_cache(const DensitySource& source, const CacheKey& key,
                         const std::filesystem::path& path);
/// Throws DataError when the file is malformed or its key differs.
MatrixDensity read_density_cache(const std::filesystem::path& path, const CacheKey& key);

}  // namespace hetprod
