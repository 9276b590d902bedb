#include "hetprod/model_family.hpp"

#include <algorithm>
#include <cmath>

#include "hetprod/errors.hpp"

namespace hetprod {

ModelSpec::ModelSpec(ModelFamily family, int periods)
    : family_(family), periods_(periods) {
  if (periods < 1) throw ConfigError("model needs at least one period");
  switch (family) {
    case ModelFamily::DynamicCD:
      names_ = {"alpha0", "beta", "gamma", "alpha1", "alpha2", "s"};
      break;
    case ModelFamily::GeneralizedCES:
      names_ = {"alpha0", "omega", "nu", "sigma", "alpha1", "alpha2", "s"};
      break;
    case ModelFamily::IntensiveCD:
      names_ = {"a", "b", "s"};
      break;
  }
}

std::size_t ModelSpec::param_index(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end())
    throw ConfigError("model '" + family_name(family_) + "' has no parameter '" +
                      std::string(name) + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

ModelFamily parse_family(std::string_view name) {
  if (name == "cd") return ModelFamily::DynamicCD;
  if (name == "ces") return ModelFamily::GeneralizedCES;
  if (name == "intensive") return ModelFamily::IntensiveCD;
  throw ConfigError("unknown model family '" + std::string(name) +
                    "' (expected cd, ces or intensive)");
}

std::string family_name(ModelFamily family) {
  switch (family) {
    case ModelFamily::DynamicCD: return "cd";
    case ModelFamily::GeneralizedCES: return "ces";
    case ModelFamily::IntensiveCD: return "intensive";
  }
  return "unknown";
}

bool is_admissible(const ModelSpec& model, const ParamVector& p) {
  if (p.size() != model.num_params()) return false;
  for (double v : p.values())
    if (!std::isfinite(v)) return false;
  if (p[model.noise_index()] < kMinNoiseSd) return false;
  switch (model.family()) {
    case ModelFamily::DynamicCD:
      return p[cd::kBeta] >= 0.0 && p[cd::kGamma] >= 0.0;
    case ModelFamily::GeneralizedCES:
      return p[ces::kOmega] >= 0.0 && p[ces::kOmega] <= 1.0 && p[ces::kNu] >= 0.0 &&
             p[ces::kSigma] > 0.0 && std::abs(p[ces::kSigma] - 1.0) >= kSigmaGuard;
    case ModelFamily::IntensiveCD:
      return true;
  }
  return false;
}

void check_admissible(const ModelSpec& model, const ParamVector& params) {
  if (params.size() != model.num_params())
    throw ConfigError("parameter vector has " + std::to_string(params.size()) +
                      " entries, model '" + family_name(model.family()) + "' needs " +
                      std::to_string(model.num_params()));
  if (!is_admissible(model, params))
    throw ConfigError("inadmissible parameters for model '" +
                      family_name(model.family()) + "'");
}

double ces_log_composite(double omega, double rho, double k, double l) {
  if (std::abs(rho) < 1e-12) return omega * k + (1.0 - omega) * l;
  const double a = rho * k;
  const double b = rho * l;
  // log(omega e^a + (1-omega) e^b), shifted by the larger exponent.
  const double m = std::max(a, b);
  const double s = omega * std::exp(a - m) + (1.0 - omega) * std::exp(b - m);
  return (m + std::log(s)) / rho;
}

namespace {

double trend(double a0, double a1, double a2, int t) {
  const double td = static_cast<double>(t);
  return a0 + a1 * td + a2 * td * td;
}

}  // namespace

double mean_output(const ModelSpec& model, const ParamVector& p, double k, double l,
                   int t) {
  check_admissible(model, p);
  switch (model.family()) {
    case ModelFamily::DynamicCD:
      return trend(p[cd::kAlpha0], p[cd::kAlpha1], p[cd::kAlpha2], t) +
             p[cd::kBeta] * k + p[cd::kGamma] * l;
    case ModelFamily::GeneralizedCES: {
      const double sigma = p[ces::kSigma];
      const double rho = (sigma - 1.0) / sigma;
      return trend(p[ces::kAlpha0], p[ces::kAlpha1], p[ces::kAlpha2], t) +
             p[ces::kNu] * ces_log_composite(p[ces::kOmega], rho, k, l);
    }
    case ModelFamily::IntensiveCD:
      return p[intensive::kA] + p[intensive::kB] * k;
  }
  return 0.0;
}

double time_avg_intercept(const ModelSpec& model, const ParamVector& p) {
  if (!model.has_dynamics())
    throw ConfigError("time-averaged intercept is undefined for the intensive model");
  if (p.size() != model.num_params())
    throw ConfigError("parameter vector length does not match the model");
  const bool is_cd = model.family() == ModelFamily::DynamicCD;
  const double a0 = (is_cd ? p[cd::kAlpha0] : p[ces::kAlpha0]);
  const double a1 = (is_cd ? p[cd::kAlpha1] : p[ces::kAlpha1]);
  const double a2 = (is_cd ? p[cd::kAlpha2] : p[ces::kAlpha2]);
  if (a1 == 0.0 && a2 == 0.0) return a0;
  // Closed-form sums of t and t^2 over 1..T.
  const double T = model.periods();
  const double sum_t = T * (T + 1.0) / 2.0;
  const double sum_t2 = T * (T + 1.0) * (2.0 * T + 1.0) / 6.0;
  return a0 + a1 * sum_t / T + a2 * sum_t2 / T;
}

double returns_to_scale(const ModelSpec& model, const ParamVector& p) {
  check_admissible(model, p);
  switch (model.family()) {
    case ModelFamily::DynamicCD: return p[cd::kBeta] + p[cd::kGamma];
    case ModelFamily::GeneralizedCES: return p[ces::kNu];
    case ModelFamily::IntensiveCD: return p[intensive::kB];
  }
  return 0.0;
}

double labor_elasticity(const ModelSpec& model, const ParamVector& p, double k,
                        double l) {
  switch (model.family()) {
    case ModelFamily::DynamicCD: return p[cd::kGamma];
    case ModelFamily::GeneralizedCES: {
      const double sigma = p[ces::kSigma];
      const double rho = (sigma - 1.0) / sigma;
      const double omega = p[ces::kOmega];
      // Labor's weight in the composite: (1-w)L^rho / (wK^rho + (1-w)L^rho).
      const double a = rho * k, b = rho * l, m = std::max(a, b);
      const double wk = omega * std::exp(a - m);
      const double wl = (1.0 - omega) * std::exp(b - m);
      return p[ces::kNu] * wl / (wk + wl);
    }
    case ModelFamily::IntensiveCD: return 1.0 - p[intensive::kB];
  }
  return 0.0;
}

}  // namespace hetprod
