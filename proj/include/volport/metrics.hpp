#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "volport/errors.hpp"
#include "volport/portfolio_env.hpp"

namespace volport {

/// Percent-valued performance summary; sharpe is empty when returns have no dispersion.
struct MetricSet {
  double annual_return = 0.0;
  double cumulative_return = 0.0;
  std::optional<double> sharpe;
  double max_drawdown = 0.0;
  double annual_volatility = 0.0;
};

namespace metrics {

inline constexpr double kPeriodsPerYear = 252.0;

inline void require_wealth(std::span<const double> wealth, std::size_t min_points) {
  if (wealth.size() < min_points)
    throw DataError("metric needs at least " + std::to_string(min_points) + " wealth points");
  for (double w : wealth)
    if (!(w > 0.0) || !std::isfinite(w)) throw NumericalError("wealth series must be positive and finite");
}

inline double cumulative_return(std::span<const double> wealth) {
  require_wealth(wealth, 2);
  return 100.0 * (wealth.back() / wealth.front() - 1.0);
}

/// CAGR over D = wealth.size() - 1 daily steps.
inline double annual_return(std::span<const double> wealth) {
  require_wealth(wealth, 2);
  const double steps = static_cast<double>(wealth.size() - 1);
  return 100.0 * (std::pow(wealth.back() / wealth.front(), kPeriodsPerYear / steps) - 1.0);
}

inline double max_drawdown(std::span<const double> wealth) {
  require_wealth(wealth, 1);
  double peak = wealth.front(), worst = 0.0;
  for (double w : wealth) {
    peak = std::max(peak, w);
    worst = std::max(worst, (peak - w) / peak);
  }
  return 100.0 * worst;
}

inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Sample standard deviation (denominator D - 1), computed on data shifted by
/// its first element so constant series give exactly zero.
inline double stddev(std::span<const double> x) {
  const double shift = x.front();
  double m = 0.0;
  for (double v : x) m += v - shift;
  m /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - shift - m) * (v - shift - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

inline double annual_volatility(std::span<const double> daily_returns) {
  if (daily_returns.size() < 3) throw DataError("volatility needs at least 3 daily returns");
  return 100.0 * stddev(daily_returns) * std::sqrt(kPeriodsPerYear);
}

inline std::optional<double> sharpe(std::span<const double> daily_returns, double risk_free_annual = 0.0) {
  if (daily_returns.size() < 3) throw DataError("Sharpe ratio needs at least 3 daily returns");
  const double m = mean(daily_returns);
  const double sd = stddev(daily_returns);
  if (!(sd > 0.0)) return std::nullopt;
  return (m - risk_free_annual / kPeriodsPerYear) / sd * std::sqrt(kPeriodsPerYear);
}

} // namespace metrics

inline MetricSet compute_metrics(const EpisodeLedger& ledger, double risk_free_annual = 0.0) {
  if (ledger.wealth.empty()) throw DataError("empty ledger");
  MetricSet m;
  m.annual_return = metrics::annual_return(ledger.wealth);
  m.cumulative_return = metrics::cumulative_return(ledger.wealth);
  m.sharpe = metrics::sharpe(ledger.net_returns, risk_free_annual);
  m.max_drawdown = metrics::max_drawdown(ledger.wealth);
  m.annual_volatility = metrics::annual_volatility(ledger.net_returns);
  return m;
}

/// Arithmetic mean of per-run metrics; Sharpe averages only the runs where it is defined.
inline MetricSet average_metrics(std::span<const MetricSet> runs) {
  if (runs.empty()) throw UsageError("no metric sets to average");
  MetricSet out;
  double sharpe_sum = 0.0;
  std::size_t sharpe_count = 0;
  for (const auto& r : runs) {
    out.annual_return += r.annual_return;
    out.cumulative_return += r.cumulative_return;
    out.max_drawdown += r.max_drawdown;
    out.annual_volatility += r.annual_volatility;
    if (r.sharpe) {
      sharpe_sum += *r.sharpe;
      ++sharpe_count;
    }
  }
  const auto k = static_cast<double>(runs.size());
  out.annual_return /= k;
  out.cumulative_return /= k;
  out.max_drawdown /= k;
  out.annual_volatility /= k;
  if (sharpe_count > 0) out.sharpe = sharpe_sum / static_cast<double>(sharpe_count);
  return out;
}

} // namespace volport
