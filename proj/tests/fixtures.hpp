#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "hetprod/model_family.hpp"
#include "hetprod/panel_data.hpp"

namespace fixture {

// Synthetic CD panel with firm-specific (alpha, beta, gamma), two sectors
// and wage shares; deterministic in `seed`.
inline hetprod::PanelDataset cd_panel(std::size_t firms, int periods, unsigned seed,
                                      double noise = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  hetprod::PanelDataset d;
  const auto n = static_cast<Eigen::Index>(firms);
  d.y.resize(n, periods);
  d.k.resize(n, periods);
  d.l.resize(n, periods);
  d.wage_share.emplace(n, periods);
  d.sector.emplace();
  for (std::size_t i = 0; i < firms; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    d.firm_ids.push_back("f" + std::to_string(1000 + i));
    d.sector->push_back(i % 3 == 0 ? "A" : (i % 3 == 1 ? "B" : "C"));
    const double a = 3.0 + 0.8 * z(rng), b = 0.3 + 0.05 * z(rng), g = 0.5 + 0.05 * z(rng);
    const double kb = 8.0 + z(rng), lb = 4.0 + 0.7 * z(rng);
    for (int t = 0; t < periods; ++t) {
      d.k(r, t) = kb + 0.3 * z(rng);
      d.l(r, t) = lb + 0.3 * z(rng);
      d.y(r, t) = a + b * d.k(r, t) + g * d.l(r, t) + noise * z(rng);
      (*d.wage_share)(r, t) = 0.3 + 0.2 * std::abs(z(rng)) / 3.0 + 0.01;
    }
  }
  return d;
}

// Fresh empty directory under the build tree's temp area.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("hetprod_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixture
