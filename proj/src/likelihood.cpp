#include "hetprod/likelihood.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "hetprod/errors.hpp"

namespace hetprod {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

double log_density_firm_type(const ModelSpec& model, const PanelDataset& data,
                             std::size_t firm, const ParamVector& params) {
  check_admissible(model, params);
  const auto i = static_cast<Eigen::Index>(firm);
  const double s = params[model.noise_index()];
  const double log_s = std::log(s);
  double total = 0.0;
  for (int t = 0; t < data.num_periods(); ++t) {
    const double h = mean_output(model, params, data.k(i, t), data.l(i, t), t + 1);
    const double z = (data.y(i, t) - h) / s;
    total += -log_s - kHalfLog2Pi - 0.5 * z * z;
  }
  return total;
}

// ---------------------------------------------------------------------------

ModelDensity::ModelDensity(const ModelSpec& model, const PanelDataset& data,
                           const TypeTable& table)
    : model_(model),
      data_(&data),
      table_(table),
      num_firms_(data.num_firms()),
      periods_(data.num_periods()) {
  if (table.model().family() != model.family())
    throw ConfigError("type table was built for a different model family");
  if (model.periods() != data.num_periods())
    throw ConfigError("model period count does not match the panel");
  const std::size_t s_dim = model.noise_index();
  for (double s : table_.axis_values(s_dim)) {
    log_norm_.push_back(-periods_ * (std::log(s) + kHalfLog2Pi));
    inv_two_var_.push_back(1.0 / (2.0 * s * s));
  }
  num_slopes_ = 0;
  if (model.family() == ModelFamily::DynamicCD) num_slopes_ = 4;
  if (model.family() == ModelFamily::IntensiveCD) num_slopes_ = 1;
  if (num_slopes_ == 0) return;

  // Regressor order matches the slope axes: (k, l, t, t^2) or (k).
  moments_.resize(num_firms_);
  const int T = periods_;
  std::vector<std::array<double, 4>> x(static_cast<std::size_t>(T));
  for (std::size_t f = 0; f < num_firms_; ++f) {
    const auto r = static_cast<Eigen::Index>(f);
    LinearMoments& m = moments_[f];
    for (int t = 0; t < T; ++t) {
      const double td = t + 1.0;
      x[static_cast<std::size_t>(t)] = {data.k(r, t), data.l(r, t), td, td * td};
    }
    double ysum = 0.0;
    for (int t = 0; t < T; ++t) ysum += data.y(r, t);
    m.y_mean = ysum / T;
    for (std::size_t j = 0; j < num_slopes_; ++j) {
      double sum = 0.0;
      for (int t = 0; t < T; ++t) sum += x[static_cast<std::size_t>(t)][j];
      m.x_mean[j] = sum / T;
    }
    for (int t = 0; t < T; ++t) {
      const auto& xt = x[static_cast<std::size_t>(t)];
      const double yc = data.y(r, t) - m.y_mean;
      m.yy += yc * yc;
      for (std::size_t j = 0; j < num_slopes_; ++j) {
        const double xj = xt[j] - m.x_mean[j];
        m.xy[j] += xj * yc;
        for (std::size_t k = 0; k < num_slopes_; ++k)
          m.xx[j * 4 + k] += xj * (xt[k] - m.x_mean[k]);
      }
    }
  }
}

void ModelDensity::fill_row(std::size_t firm, std::uint64_t q_begin, std::uint64_t q_end,
                            std::span<double> out) const {
  if (firm >= num_firms_ || q_begin > q_end || q_end > table_.size() ||
      out.size() < q_end - q_begin)
    throw std::out_of_range("ModelDensity::fill_row range");
  if (q_begin == q_end) return;
  if (num_slopes_ > 0) {
    fill_linear(firm, q_begin, q_end, out);
  } else {
    fill_ces(firm, q_begin, q_end, out);
  }
}

// Residual sum of squares from centered moments:
//   RSS = yy - 2 b'xy + b'xx b + T (ybar - a - b'xbar)^2
// where a is the intercept and b the slope vector.
void ModelDensity::fill_linear(std::size_t firm, std::uint64_t q_begin,
                               std::uint64_t q_end, std::span<double> out) const {
  const LinearMoments& m = moments_[firm];
  const std::size_t dims = table_.dims();
  const std::size_t s_dim = dims - 1;
  const double T = periods_;
  std::vector<int> idx = table_.decode(q_begin);
  std::array<double, 4> b{};
  double within = 0.0, b_xbar = 0.0, rss = 0.0;
  bool dirty = true;
  std::size_t o = 0;
  for (std::uint64_t q = q_begin; q < q_end; ++q, ++o) {
    if (dirty) {
      for (std::size_t j = 0; j < num_slopes_; ++j)
        b[j] = table_.axis_values(j + 1)[static_cast<std::size_t>(idx[j + 1])];
      within = m.yy;
      b_xbar = 0.0;
      for (std::size_t j = 0; j < num_slopes_; ++j) {
        within -= 2.0 * b[j] * m.xy[j];
        double row = 0.0;
        for (std::size_t k = 0; k < num_slopes_; ++k) row += m.xx[j * 4 + k] * b[k];
        within += b[j] * row;
        b_xbar += b[j] * m.x_mean[j];
      }
      const double a = table_.axis_values(0)[static_cast<std::size_t>(idx[0])];
      const double c = m.y_mean - a - b_xbar;
      rss = std::max(within + T * c * c, 0.0);
      dirty = false;
    }
    const auto s_node = static_cast<std::size_t>(idx[s_dim]);
    out[o] = log_norm_[s_node] - rss * inv_two_var_[s_node];
    // Odometer step; anything other than the noise axis changes the RSS.
    std::size_t d = dims;
    while (d-- > 0) {
      if (static_cast<std::size_t>(++idx[d]) < table_.axis_values(d).size()) break;
      idx[d] = 0;
    }
    dirty = d != s_dim;
  }
}

void ModelDensity::fill_ces(std::size_t firm, std::uint64_t q_begin, std::uint64_t q_end,
                            std::span<double> out) const {
  const auto r = static_cast<Eigen::Index>(firm);
  const std::size_t s_dim = ces::kS;
  const int T = periods_;
  std::vector<int> idx = table_.decode(q_begin);
  std::vector<double> z(static_cast<std::size_t>(T));
  double rss = 0.0;
  bool z_dirty = true, rss_dirty = true;
  auto val = [&](std::size_t d) {
    return table_.axis_values(d)[static_cast<std::size_t>(idx[d])];
  };
  std::size_t o = 0;
  for (std::uint64_t q = q_begin; q < q_end; ++q, ++o) {
    if (z_dirty) {
      const double omega = val(ces::kOmega), nu = val(ces::kNu), sigma = val(ces::kSigma);
      const double rho = (sigma - 1.0) / sigma;
      for (int t = 0; t < T; ++t)
        z[static_cast<std::size_t>(t)] =
            data_->y(r, t) - nu * ces_log_composite(omega, rho, data_->k(r, t), data_->l(r, t));
      z_dirty = false;
    }
    if (rss_dirty) {
      const double a0 = val(ces::kAlpha0), a1 = val(ces::kAlpha1), a2 = val(ces::kAlpha2);
      rss = 0.0;
      for (int t = 0; t < T; ++t) {
        const double td = t + 1.0;
        const double e = z[static_cast<std::size_t>(t)] - (a0 + a1 * td + a2 * td * td);
        rss += e * e;
      }
      rss_dirty = false;
    }
    const auto s_node = static_cast<std::size_t>(idx[s_dim]);
    out[o] = log_norm_[s_node] - rss * inv_two_var_[s_node];
    std::size_t d = table_.dims();
    while (d-- > 0) {
      if (static_cast<std::size_t>(++idx[d]) < table_.axis_values(d).size()) break;
      idx[d] = 0;
    }
    rss_dirty = d != s_dim;
    z_dirty = d <= ces::kSigma;
  }
}

void MatrixDensity::fill_row(std::size_t firm, std::uint64_t q_begin, std::uint64_t q_end,
                             std::span<double> out) const {
  if (firm >= num_firms() || q_begin > q_end || q_end > num_types() ||
      out.size() < q_end - q_begin)
    throw std::out_of_range("MatrixDensity::fill_row range");
  const double* row = log_f_.data() + static_cast<std::size_t>(firm) * log_f_.cols();
  std::copy(row + q_begin, row + q_end, out.begin());
}

// ---------------------------------------------------------------------------

BlockedLikelihood::BlockedLikelihood(const DensitySource& source, BlockShape shape,
                                     std::size_t memory_budget_bytes)
    : source_(&source), shape_(shape) {
  if (shape.firms == 0 || shape.types == 0)
    throw ConfigError("block shape must be positive");
  if (shape.firms * shape.types * sizeof(double) > memory_budget_bytes)
    throw ConfigError("one likelihood block exceeds the memory budget");
  firm_blocks_ = (source.num_firms() + shape.firms - 1) / shape.firms;
  type_blocks_ = static_cast<std::size_t>((source.num_types() + shape.types - 1) / shape.types);
}

LogDensityBlock BlockedLikelihood::block(std::size_t index) const {
  if (index >= num_blocks()) throw std::out_of_range("block index");
  LogDensityBlock b;
  const std::size_t fb = index / type_blocks_;
  const std::size_t tb = index % type_blocks_;
  b.firm_begin = fb * shape_.firms;
  b.firm_end = std::min(source_->num_firms(), b.firm_begin + shape_.firms);
  b.type_begin = static_cast<std::uint64_t>(tb) * shape_.types;
  b.type_end = std::min<std::uint64_t>(source_->num_types(), b.type_begin + shape_.types);
  b.values.resize(b.firms() * b.types());
  for (std::size_t i = 0; i < b.firms(); ++i)
    source_->fill_row(b.firm_begin + i, b.type_begin, b.type_end,
                      std::span<double>(b.values).subspan(i * b.types(), b.types()));
  return b;
}

void BlockedLikelihood::for_each_block(
    const std::function<void(LogDensityBlock&&)>& sink) const {
  const auto n = static_cast<long long>(num_blocks());
#pragma omp parallel for schedule(dynamic, 1)
  for (long long j = 0; j < n; ++j) {
    LogDensityBlock b = block(static_cast<std::size_t>(j));
#pragma omp critical(hetprod_block_sink)
    sink(std::move(b));
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kCacheMagic[8] = {'H', 'P', 'L', 'O', 'G', 'F', '0', '1'};

class Fnv1a {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= c[i];
      h_ *= 1099511628211ull;
    }
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      const auto c = static_cast<unsigned char>(v >> (8 * b));
      bytes(&c, 1);
    }
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  std::uint64_t value() const { return h_; }

 private:
  std::uint64_t h_ = 1469598103934665603ull;
};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated density cache");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

CacheKey cache_key(const ModelSpec& model, const GridSpec& grid, const PanelDataset& data) {
  CacheKey key;
  key.periods = static_cast<std::uint64_t>(data.num_periods());
  Fnv1a mh;
  mh.str(family_name(model.family()));
  mh.u64(static_cast<std::uint64_t>(model.periods()));
  key.model_hash = mh.value();
  Fnv1a gh;
  for (const auto& a : grid.axes) {
    gh.str(a.name);
    gh.f64(a.min);
    gh.f64(a.max);
    gh.u64(static_cast<std::uint64_t>(a.points));
  }
  key.grid_hash = gh.value();
  Fnv1a dh;
  for (const RowMatrix* m : {&data.y, &data.k, &data.l})
    for (Eigen::Index j = 0; j < m->size(); ++j) dh.f64(m->data()[j]);
  key.data_hash = dh.value();
  return key;
}

void write_density_cache(const DensitySource& source, const CacheKey& key,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write density cache '" + path.string() + "'");
  out.write(kCacheMagic, sizeof kCacheMagic);
  put_u64(out, source.num_firms());
  put_u64(out, source.num_types());
  put_u64(out, key.periods);
  put_u64(out, key.model_hash);
  put_u64(out, key.grid_hash);
  put_u64(out, key.data_hash);
  constexpr std::uint64_t kChunk = 1 << 14;
  std::vector<double> buf(kChunk);
  for (std::size_t i = 0; i < source.num_firms(); ++i) {
    for (std::uint64_t q = 0; q < source.num_types(); q += kChunk) {
      const std::uint64_t end = std::min(source.num_types(), q + kChunk);
      source.fill_row(i, q, end, buf);
      for (std::uint64_t j = 0; j < end - q; ++j) put_u64(out, std::bit_cast<std::uint64_t>(buf[j]));
    }
  }
  if (!out) throw DataError("failed writing density cache '" + path.string() + "'");
}

MatrixDensity read_density_cache(const std::filesystem::path& path, const CacheKey& key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read density cache '" + path.string() + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0)
    throw DataError("not a density cache file '" + path.string() + "'");
  const std::uint64_t firms = get_u64(in);
  const std::uint64_t types = get_u64(in);
  CacheKey stored;
  stored.periods = get_u64(in);
  stored.model_hash = get_u64(in);
  stored.grid_hash = get_u64(in);
  stored.data_hash = get_u64(in);
  if (stored.periods != key.periods || stored.model_hash != key.model_hash ||
      stored.grid_hash != key.grid_hash || stored.data_hash != key.data_hash)
    throw DataError("density cache '" + path.string() + "' was built for other inputs");
  RowMatrix m(static_cast<Eigen::Index>(firms), static_cast<Eigen::Index>(types));
  for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = std::bit_cast<double>(get_u64(in));
  return MatrixDensity(std::move(m));
}

}  // namespace hetprod
