#include "hetprod/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hetprod/analytics.hpp"
#include "hetprod/errors.hpp"
#include "hetprod/io.hpp"
#include "hetprod/likelihood.hpp"
#include "hetprod/posterior_stats.hpp"
#include "hetprod/random.hpp"
#include "hetprod/stats.hpp"

namespace hetprod {

namespace {

enum Stream : std::uint32_t {
  kStreamInputMeans = 1,
  kStreamInputNoise = 2,
  kStreamParams = 3,
  kStreamOutputNoise = 4,
  kStreamSector = 5,
  kStreamGridType = 6,
};

// Symmetric square root factor A with A A' = M, negative eigenvalues from
// rounding clipped to zero.
template <typename Matrix>
Matrix psd_factor(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  auto d = es.eigenvalues();
  for (Eigen::Index j = 0; j < d.size(); ++j) d(j) = std::sqrt(std::max(d(j), 0.0));
  return es.eigenvectors() * d.asDiagonal();
}

template <typename Matrix>
Matrix pseudo_inverse(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  const double cutoff = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  auto d = es.eigenvalues();
  for (Eigen::Index j = 0; j < d.size(); ++j) d(j) = std::abs(d(j)) > cutoff ? 1.0 / d(j) : 0.0;
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

std::string firm_label(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "f%05zu", i + 1);
  return buf;
}

std::string sector_label(int s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%02d", s + 1);
  return buf;
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

void DGPSpec::validate() const {
  if (firms < 2) throw ConfigError("DGP needs at least two firms");
  if (periods < 1) throw ConfigError("DGP needs at least one period");
  if (replications < 1) throw ConfigError("DGP needs at least one replication");
  if (!(within_sd_k >= 0.0) || !(within_sd_l >= 0.0))
    throw ConfigError("input noise SDs must be nonnegative");
  if (!(min_sigma >= 0.0) || !(min_elasticity >= 0.0))
    throw ConfigError("clamping bounds must be nonnegative");
  if (sectors < 0) throw ConfigError("sector count must be nonnegative");
  if (!mean.allFinite() || !cov.allFinite()) throw ConfigError("DGP moments must be finite");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw ConfigError("DGP covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<DgpMatrix> es(cov);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale)
    throw ConfigError("DGP covariance is not positive semidefinite");
  if (inputs) {
    if (inputs->num_firms() < firms) throw ConfigError("input panel has fewer firms than the DGP");
    if (inputs->num_periods() != periods)
      throw ConfigError("input panel period count differs from the DGP");
  }
}

double alpha_beta_corr_for_target(double target, double sd_beta, double sd_gamma,
                                  double corr_alpha_gamma, double corr_beta_gamma) {
  const double sd_scale = std::sqrt(sd_beta * sd_beta + sd_gamma * sd_gamma +
                                    2.0 * corr_beta_gamma * sd_beta * sd_gamma);
  return (target * sd_scale - corr_alpha_gamma * sd_gamma) / sd_beta;
}

DGPSpec calibrated_dgp(double target_corr) {
  DGPSpec spec;
  spec.mean << 3.49, 0.33, 0.39, 0.18, 8.36, 3.84;
  const DgpVector sd = (DgpVector() << 1.7, 0.2, 0.21, 0.08, 1.5, 1.2).finished();
  DgpMatrix corr = DgpMatrix::Identity();
  const double r_ag = -0.13, r_bg = -0.337;
  const double r_ab = alpha_beta_corr_for_target(target_corr, sd(1), sd(2), r_ag, r_bg);
  corr(0, 1) = corr(1, 0) = r_ab;
  corr(0, 2) = corr(2, 0) = r_ag;
  corr(1, 2) = corr(2, 1) = r_bg;
  corr(4, 5) = corr(5, 4) = 0.7;
  spec.cov = sd.asDiagonal() * corr * sd.asDiagonal();
  spec.within_sd_k = 0.4;
  spec.within_sd_l = 0.4;
  return spec;
}

SimulationOptions calibrated_simulation_options() {
  SimulationOptions o;
  o.grid.overrides["alpha0"] = {-1.6, 8.6, 25};
  o.grid.overrides["beta"] = {0.0, 1.0, 20};
  o.grid.overrides["gamma"] = {0.0, 1.0, 20};
  o.grid.overrides["alpha1"] = {0.0, 0.0, 1};
  o.grid.overrides["alpha2"] = {0.0, 0.0, 1};
  o.grid.overrides["s"] = {kMinNoiseSd, 0.45, 5};
  o.solver.tol = 1e-5;
  o.solver.loglik_tol = 1e-5;
  o.solver.max_iter = 3000;
  return o;
}

Replication generate_replication(const DGPSpec& spec, int b) {
  spec.validate();
  const KeyedRandom rng(spec.seed);
  const auto rb = static_cast<std::uint32_t>(b);
  const std::size_t n = spec.firms;
  const int T = spec.periods;

  // Parameters given firm-mean inputs: theta | x ~ N(mu_t + S_tx S_xx^+ (x - mu_x), C).
  const Eigen::Vector4d mu_t = spec.mean.head<4>();
  const Eigen::Vector2d mu_x = spec.mean.tail<2>();
  const Eigen::Matrix4d s_tt = spec.cov.topLeftCorner<4, 4>();
  const Eigen::Matrix<double, 4, 2> s_tx = spec.cov.topRightCorner<4, 2>();
  const Eigen::Matrix2d s_xx = spec.cov.bottomRightCorner<2, 2>();
  const Eigen::Matrix2d s_xx_pinv = pseudo_inverse(s_xx);
  const Eigen::Matrix<double, 4, 2> gain = s_tx * s_xx_pinv;
  const Eigen::Matrix4d cond = s_tt - gain * s_tx.transpose();
  const Eigen::Matrix4d cond_factor = psd_factor(Eigen::Matrix4d(0.5 * (cond + cond.transpose())));
  const Eigen::Matrix2d x_factor = psd_factor(s_xx);

  Replication rep;
  PanelDataset& d = rep.data;
  d.first_year = 1;
  d.y.resize(static_cast<Eigen::Index>(n), T);
  d.k.resize(static_cast<Eigen::Index>(n), T);
  d.l.resize(static_cast<Eigen::Index>(n), T);
  if (spec.inputs || spec.sectors > 0) d.sector.emplace(n);
  TrueParameters& tp = rep.truth;
  tp.alpha.resize(n);
  tp.beta.resize(n);
  tp.gamma.resize(n);
  tp.sigma.resize(n);

  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto ri = static_cast<std::uint32_t>(i);
    d.firm_ids.push_back(firm_label(i));
    Eigen::Vector2d x;
    if (spec.inputs) {
      const PanelDataset& src = *spec.inputs;
      d.k.row(r) = src.k.row(r);
      d.l.row(r) = src.l.row(r);
      x << src.k.row(r).mean(), src.l.row(r).mean();
      if (src.sector) (*d.sector)[i] = (*src.sector)[i];
      else if (d.sector) (*d.sector)[i] = "all";
    } else {
      const Eigen::Vector2d z(rng.normal(kStreamInputMeans, rb, ri, 0),
                              rng.normal(kStreamInputMeans, rb, ri, 1));
      x = mu_x + x_factor * z;
      for (int t = 0; t < T; ++t) {
        const auto n2 = static_cast<std::uint32_t>(2 * t);
        d.k(r, t) = x(0) + spec.within_sd_k * rng.normal(kStreamInputNoise, rb, ri, n2);
        d.l(r, t) = x(1) + spec.within_sd_l * rng.normal(kStreamInputNoise, rb, ri, n2 + 1);
      }
      if (spec.sectors > 0) {
        const double u = rng.uniform(kStreamSector, rb, ri, 0);
        (*d.sector)[i] = sector_label(std::min(spec.sectors - 1, static_cast<int>(u * spec.sectors)));
      }
    }
    Eigen::Vector4d z;
    for (int j = 0; j < 4; ++j) z(j) = rng.normal(kStreamParams, rb, ri, static_cast<std::uint32_t>(j));
    const Eigen::Vector4d theta = mu_t + gain * (x - mu_x) + cond_factor * z;
    const double beta = std::max(theta(1), spec.min_elasticity);
    const double gamma = std::max(theta(2), spec.min_elasticity);
    const double sigma = std::max(theta(3), spec.min_sigma);
    if (beta != theta(1) || gamma != theta(2) || sigma != theta(3)) ++tp.clamped_draws;
    tp.alpha[i] = theta(0);
    tp.beta[i] = beta;
    tp.gamma[i] = gamma;
    tp.sigma[i] = sigma;
    for (int t = 0; t < T; ++t) {
      const double e = rng.normal(kStreamOutputNoise, rb, ri, static_cast<std::uint32_t>(t));
      d.y(r, t) = theta(0) + beta * d.k(r, t) + gamma * d.l(r, t) + sigma * e;
    }
  }
  return rep;
}

GridReplication generate_grid_replication(const TypeTable& table, std::size_t firms,
                                          std::uint64_t seed, double noise_scale,
                                          bool s_at_minimum, double kbar, double lbar,
                                          double input_sd) {
  const ModelSpec& model = table.model();
  const int T = model.periods();
  const KeyedRandom rng(seed);
  GridReplication out;
  PanelDataset& d = out.data;
  d.y.resize(static_cast<Eigen::Index>(firms), T);
  d.k.resize(static_cast<Eigen::Index>(firms), T);
  d.l.resize(static_cast<Eigen::Index>(firms), T);
  const std::size_t s_dim = model.noise_index();
  for (std::size_t i = 0; i < firms; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto ri = static_cast<std::uint32_t>(i);
    d.firm_ids.push_back(firm_label(i));
    const double u = rng.uniform(kStreamGridType, 0, ri, 0);
    std::uint64_t q = std::min<std::uint64_t>(
        table.size() - 1, static_cast<std::uint64_t>(u * static_cast<double>(table.size())));
    if (s_at_minimum) {
      std::vector<int> idx = table.decode(q);
      idx[s_dim] = 0;
      q = table.encode(idx);
    }
    out.true_types.push_back(q);
    const ParamVector p = table.enumerate_type(q);
    for (int t = 0; t < T; ++t) {
      const auto n2 = static_cast<std::uint32_t>(2 * t);
      d.k(r, t) = kbar + input_sd * rng.normal(kStreamInputNoise, 0, ri, n2);
      d.l(r, t) = lbar + input_sd * rng.normal(kStreamInputNoise, 0, ri, n2 + 1);
      const double e = rng.normal(kStreamOutputNoise, 0, ri, static_cast<std::uint32_t>(t));
      d.y(r, t) = mean_output(model, p, d.k(r, t), d.l(r, t), t + 1) + noise_scale * p[s_dim] * e;
    }
  }
  return out;
}

ReplicationSummary estimate_replication(const DGPSpec& spec, int b,
                                        const SimulationOptions& options) {
  const Replication rep = generate_replication(spec, b);
  const PanelDataset& data = rep.data;
  const ModelSpec model(ModelFamily::DynamicCD, spec.periods);
  const GridSpec grid =
      apply_overrides(default_grid(model, data, options.grid.points), options.grid.overrides, model);
  const TypeTable table(model, grid);
  const ModelDensity density(model, data, table);

  ReplicationSummary s;
  s.replication = b;
  s.num_types = table.size();
  s.clamped_draws = rep.truth.clamped_draws;
  auto [pi, report] = fixed_point_iterate(density, uniform_mixing(table.size()), options.solver);
  s.converged = report.converged;
  s.iterations = report.iterations;
  s.loglik = pi.loglik;
  const double threshold = options.support_threshold > 0.0 ? options.support_threshold
                                                           : default_support_threshold(table.size());
  const MixingDistribution pruned = extract_support(pi, threshold);
  s.support_size = pruned.support.size();
  const auto posteriors = firm_posteriors(density, pruned, table, data.firm_ids);
  const PopulationMoments mix = population_moments(pruned, table);
  const auto cols = posterior_columns(posteriors);
  const std::size_t alpha_col = mix.index("alpha_bar");
  const std::size_t scale_col = mix.index("scale");
  const std::array<std::size_t, 3> est_cols{alpha_col, mix.index("beta"), mix.index("gamma")};
  const std::array<const std::vector<double>*, 3> truth{&rep.truth.alpha, &rep.truth.beta,
                                                         &rep.truth.gamma};
  for (std::size_t c = 0; c < 3; ++c) {
    s.true_mean[c] = mean(*truth[c]);
    s.true_sd[c] = sd(*truth[c]);
    s.est_mean[c] = mean(cols[est_cols[c]]);
    s.est_sd[c] = sd(cols[est_cols[c]]);
    s.mixture_sd[c] = mix.sd[est_cols[c]];
  }
  std::vector<double> true_scale(spec.firms);
  for (std::size_t i = 0; i < spec.firms; ++i) true_scale[i] = rep.truth.beta[i] + rep.truth.gamma[i];
  s.true_corr_alpha_scale = pearson(rep.truth.alpha, true_scale);
  s.est_corr_alpha_scale = pearson(cols[alpha_col], cols[scale_col]);
  s.mixture_corr_alpha_scale = mix.correlation(static_cast<Eigen::Index>(alpha_col),
                                               static_cast<Eigen::Index>(scale_col));
  TTPReference ref;
  if (!data.sector) {
    ref.log_k0 = sample_quantile(std::span<const double>(data.k.data(), static_cast<std::size_t>(data.k.size())), 0.5);
    ref.log_l0 = sample_quantile(std::span<const double>(data.l.data(), static_cast<std::size_t>(data.l.size())), 0.5);
  }
  const TTPResult ttp = compute_ttp(posteriors, data, model, ref);
  s.sd_ln_ttp = ttp.pooled.sd_ln_ttp;
  s.sd_ln_tfp = ttp.pooled.sd_ln_tfp;
  return s;
}

void aggregate_errors(SimulationResult& result) {
  result.failed = 0;
  std::array<double, 3> sb{}, sm{}, sbs{}, sms{};
  int used = 0;
  for (const auto& r : result.replications) {
    if (!r.converged) {
      ++result.failed;
      continue;
    }
    ++used;
    for (std::size_t c = 0; c < 3; ++c) {
      const double em = r.true_mean[c] - r.est_mean[c];
      const double es = r.true_sd[c] - r.est_sd[c];
      sb[c] += em;
      sm[c] += em * em;
      sbs[c] += es;
      sms[c] += es * es;
    }
  }
  const double nan = std::nan("");
  for (std::size_t c = 0; c < 3; ++c) {
    result.bias_mean[c] = used ? sb[c] / used : nan;
    result.mse_mean[c] = used ? sm[c] / used : nan;
    result.bias_sd[c] = used ? sbs[c] / used : nan;
    result.mse_sd[c] = used ? sms[c] / used : nan;
  }
}

SimulationResult run_bias_mse(const DGPSpec& spec, const SimulationOptions& options) {
  spec.validate();
  SimulationResult result;
  for (int b = 0; b < spec.replications; ++b) {
    result.replications.push_back(estimate_replication(spec, b, options));
    if (options.on_replication) options.on_replication(b, spec.replications);
  }
  aggregate_errors(result);
  return result;
}

void write_simulation_csv(const SimulationResult& result, const std::string& replications_path,
                          const std::string& bias_path) {
  std::ostringstream os;
  os << "replication,converged,iterations,loglik,num_types,support_size,clamped_draws";
  for (const char* c : kSimColumns)
    os << ",true_mean_" << c << ",est_mean_" << c << ",true_sd_" << c << ",est_sd_" << c
       << ",mixture_sd_" << c;
  os << ",true_corr_alpha_scale,est_corr_alpha_scale,mixture_corr_alpha_scale,sd_ln_ttp,sd_ln_tfp\n";
  for (const auto& r : result.replications) {
    os << r.replication << ',' << (r.converged ? 1 : 0) << ',' << r.iterations << ','
       << fmt(r.loglik) << ',' << r.num_types << ',' << r.support_size << ',' << r.clamped_draws;
    for (std::size_t c = 0; c < 3; ++c)
      os << ',' << fmt(r.true_mean[c]) << ',' << fmt(r.est_mean[c]) << ',' << fmt(r.true_sd[c])
         << ',' << fmt(r.est_sd[c]) << ',' << fmt(r.mixture_sd[c]);
    os << ',' << fmt(r.true_corr_alpha_scale) << ',' << fmt(r.est_corr_alpha_scale) << ','
       << fmt(r.mixture_corr_alpha_scale) << ',' << fmt(r.sd_ln_ttp) << ',' << fmt(r.sd_ln_tfp)
       << '\n';
  }
  write_text_file(replications_path, os.str());

  std::ostringstream bs;
  bs << "statistic,alpha,beta,gamma\n";
  auto row = [&](const char* name, const std::array<double, 3>& v) {
    bs << name << ',' << fmt(v[0]) << ',' << fmt(v[1]) << ',' << fmt(v[2]) << '\n';
  };
  row("bias_mean", result.bias_mean);
  row("mse_mean", result.mse_mean);
  row("bias_sd", result.bias_sd);
  row("mse_sd", result.mse_sd);
  write_text_file(bias_path, bs.str());
}

}  // namespace hetprod
