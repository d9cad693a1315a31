#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "volport/market_data.hpp"
#include "volport/portfolio_env.hpp"

namespace volport::testing {

inline std::vector<Date> weekdays(std::size_t n, Date from = Date(2015, 1, 5)) {
  std::vector<Date> out;
  for (std::size_t i = 0; i < n; ++i, from = from.next_weekday()) out.push_back(from);
  return out;
}

/// Tickers A0, A1, ... for each column of `prices`.
inline PricePanel panel_of(const Eigen::MatrixXd& prices) {
  std::vector<std::string> tickers;
  for (Eigen::Index i = 0; i < prices.cols(); ++i) tickers.push_back("A" + std::to_string(i));
  return PricePanel(tickers, weekdays(static_cast<std::size_t>(prices.rows())), prices);
}

/// Each column grows geometrically at its own daily factor.
inline PricePanel growth_panel(const std::vector<double>& factors, std::size_t days, double p0 = 100.0) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(days), static_cast<Eigen::Index>(factors.size()));
  for (std::size_t i = 0; i < factors.size(); ++i) {
    double p = p0 * (1.0 + 0.1 * static_cast<double>(i));
    for (std::size_t t = 0; t < days; ++t) {
      m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = p;
      p *= factors[i];
    }
  }
  return panel_of(m);
}

inline PricePanel random_panel(std::size_t n, std::size_t days, std::uint64_t seed, double vol = 0.015) {
  std::vector<AssetSpec> specs;
  for (std::size_t i = 0; i < n; ++i)
    specs.push_back({"S" + std::to_string(10 + i), {vol * vol * 0.1, 0.05, 0.85}, 0.0003, 20.0 + 10.0 * static_cast<double>(i)});
  return simulate_garch_panel(specs, days, seed);
}

/// Two i.i.d. Gaussian assets with equal volatility; A drifts +0.1%/day, B has no drift.
inline PricePanel drift_gap_panel(std::uint64_t seed, std::size_t days = 1260, double vol = 0.01) {
  return simulate_garch_panel({{"A", {vol * vol, 0.0, 0.0}, 0.001, 100.0}, {"B", {vol * vol, 0.0, 0.0}, 0.0, 100.0}},
                              days, seed);
}

inline PortfolioEnv make_env(const PricePanel& panel, EnvConfig cfg = {}) {
  return PortfolioEnv(panel, compute_indicators(panel), cfg);
}

} // namespace volport::testing
