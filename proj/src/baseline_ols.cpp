#include "hetprod/baseline_ols.hpp"

#include <cmath>
#include <sstream>

#include "hetprod/errors.hpp"
#include "hetprod/io.hpp"

namespace hetprod {

LeastSquaresFit least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  LeastSquaresFit fit;
  if (x.rows() < x.cols()) return fit;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
  const auto& sv = svd.singularValues();
  fit.rank_ok = sv.size() > 0 && sv(sv.size() - 1) >= kRankTolerance * sv(0);
  if (!fit.rank_ok) return fit;
  fit.coefficients = x.colPivHouseholderQr().solve(y);
  fit.residuals = y - x * fit.coefficients;
  fit.rss = fit.residuals.squaredNorm();
  return fit;
}

std::vector<std::string> ols_coefficient_names(const ModelSpec& model) {
  if (model.family() == ModelFamily::IntensiveCD) return {"a", "b"};
  return {"alpha0", "alpha1", "alpha2", "beta", "gamma"};
}

Eigen::MatrixXd ols_design(const PanelDataset& data, const ModelSpec& model,
                           std::size_t firm) {
  const int T = data.num_periods();
  const auto i = static_cast<Eigen::Index>(firm);
  const bool intensive = model.family() == ModelFamily::IntensiveCD;
  Eigen::MatrixXd x(T, intensive ? 2 : 5);
  for (int t = 0; t < T; ++t) {
    const double td = t + 1.0;
    x(t, 0) = 1.0;
    if (intensive) {
      x(t, 1) = data.k(i, t);
    } else {
      x(t, 1) = td;
      x(t, 2) = td * td;
      x(t, 3) = data.k(i, t);
      x(t, 4) = data.l(i, t);
    }
  }
  return x;
}

namespace {

FirmOLSEstimate to_estimate(std::string id, const LeastSquaresFit& fit,
                            Eigen::Index n, Eigen::Index p) {
  FirmOLSEstimate est;
  est.firm_id = std::move(id);
  est.rank_ok = fit.rank_ok;
  if (fit.rank_ok) {
    est.coefficients.assign(fit.coefficients.data(),
                            fit.coefficients.data() + fit.coefficients.size());
    est.residual_sd = std::sqrt(fit.rss / static_cast<double>(n - p));
  }
  return est;
}

}  // namespace

std::vector<FirmOLSEstimate> per_firm_ols(const PanelDataset& data,
                                          const ModelSpec& model) {
  const auto p = static_cast<int>(ols_coefficient_names(model).size());
  if (data.num_periods() < p + 1)
    throw ConfigError("per-firm OLS needs T >= " + std::to_string(p + 1) +
                      " periods, panel has " + std::to_string(data.num_periods()));
  std::vector<FirmOLSEstimate> out(data.num_firms());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < data.num_firms(); ++i) {
    const Eigen::MatrixXd x = ols_design(data, model, i);
    const Eigen::VectorXd y = data.y.row(static_cast<Eigen::Index>(i)).transpose();
    out[i] = to_estimate(data.firm_ids[i], least_squares(x, y), x.rows(), x.cols());
  }
  return out;
}

FirmOLSEstimate pooled_ols(const PanelDataset& data, const ModelSpec& model) {
  const auto T = static_cast<Eigen::Index>(data.num_periods());
  const auto p = static_cast<Eigen::Index>(ols_coefficient_names(model).size());
  const auto n = static_cast<Eigen::Index>(data.num_firms()) * T;
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < data.num_firms(); ++i) {
    const auto r = static_cast<Eigen::Index>(i) * T;
    x.middleRows(r, T) = ols_design(data, model, i);
    y.segment(r, T) = data.y.row(static_cast<Eigen::Index>(i)).transpose();
  }
  return to_estimate("pooled", least_squares(x, y), n, p);
}

void write_ols_csv(const std::vector<FirmOLSEstimate>& estimates,
                   const ModelSpec& model, const std::string& path) {
  const auto names = ols_coefficient_names(model);
  std::ostringstream out;
  out << "firm_id";
  for (const auto& n : names) out << ',' << n;
  out << ",residual_sd,rank_ok\n";
  for (const auto& e : estimates) {
    out << e.firm_id;
    for (std::size_t j = 0; j < names.size(); ++j)
      out << ',' << (e.rank_ok ? format_double(e.coefficients[j]) : std::string("nan"));
    out << ',' << (e.rank_ok ? format_double(e.residual_sd) : std::string("nan")) << ','
        << (e.rank_ok ? 1 : 0) << '\n';
  }
  write_text_file(path, out.str());
}

}  // namespace hetprod
