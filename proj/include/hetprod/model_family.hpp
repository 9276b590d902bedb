#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace hetprod {

enum class ModelFamily { DynamicCD, GeneralizedCES, IntensiveCD };

// Half-width of the excluded band around sigma = 1 in CES grids.
inline constexpr double kSigmaGuard = 1e-3;
// Smallest admissible error standard deviation (log-output units).
inline constexpr double kMinNoiseSd = 0.05;

// Parameter positions. The order is also the lexicographic order of the type
// table, with the noise standard deviation last.
namespace cd {
enum : std::size_t { kAlpha0, kBeta, kGamma, kAlpha1, kAlpha2, kS, kCount };
}
namespace ces {
enum : std::size_t { kAlpha0, kOmega, kNu, kSigma, kAlpha1, kAlpha2, kS, kCount };
}
namespace intensive {
enum : std::size_t { kA, kB, kS, kCount };
}

class ModelSpec {
 public:
  ModelSpec(ModelFamily family, int periods);

  ModelFamily family() const { return family_; }
  int periods() const { return periods_; }
  std::size_t num_params() const { return names_.size(); }
  const std::vector<std::string>& param_names() const { return names_; }
  // Throws ConfigError for unknown names.
  std::size_t param_index(std::string_view name) const;
  std::size_t noise_index() const { return names_.size() - 1; }
  bool has_dynamics() const { return family_ != ModelFamily::IntensiveCD; }

 private:
  ModelFamily family_;
  int periods_;
  std::vector<std::string> names_;
};

// "cd" | "ces" | "intensive"
ModelFamily parse_family(std::string_view name);
std::string family_name(ModelFamily family);

/// Parameter values ordered as ModelSpec::param_names().
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t n) : values_(n, 0.0) {}
  ParamVector(std::initializer_list<double> v) : values_(v) {}
  explicit ParamVector(std::vector<double> v) : values_(std::move(v)) {}

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

// Throws ConfigError when the vector has the wrong length or lies outside
// the admissible region of the family.
void check_admissible(const ModelSpec& model, const ParamVector& params);
bool is_admissible(const ModelSpec& model, const ParamVector& params);

/// ln(omega*exp(rho*k) + (1-omega)*exp(rho*l)) / rho computed with a max
/// shift; tends to omega*k + (1-omega)*l as rho -> 0.
double ces_log_composite(double omega, double rho, double k, double l);

/// Mean log output h(X; psi) at log inputs (k, l) in period t (1-based).
/// For the intensive family k is log capital per worker and l is ignored.
double mean_output(const ModelSpec& model, const ParamVector& params, double k,
                   double l, int t);

/// Factor-neutral productivity averaged over t = 1..T.
double time_avg_intercept(const ModelSpec& model, const ParamVector& params);

/// beta + gamma (CD), nu (CES), b (intensive).
double returns_to_scale(const ModelSpec& model, const ParamVector& params);

/// Output elasticity of labor at log inputs (k, l), where k and l are in
/// levels-per-firm logs (not per worker) for every family.
double labor_elasticity(const ModelSpec& model, const ParamVector& params,
                        double k, double l);

}  // namespace hetprod
