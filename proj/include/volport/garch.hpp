#pragma once

// GARCH(1,1) estimation by Gaussian maximum likelihood, multi-step volatility
// forecasts, and the three-way volatility partition of a ticker universe.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volport/errors.hpp"
#include "volport/garch_params.hpp"
#include "volport/market_data.hpp"
#include "volport/nelder_mead.hpp"

namespace volport {

inline constexpr double kTradingDaysPerYear = 252.0;
inline constexpr double kMaxPersistence = 0.9999;
inline constexpr std::size_t kMinGarchObservations = 100;

struct GarchFit {
  GarchParams params;
  double loglik = 0.0;
  std::vector<double> sigma2_path;
  bool converged = false;
  std::size_t iterations = 0;
};

struct VolatilityScore {
  std::string ticker;
  double annual_vol = 0.0;
};

enum class RiskClass { aggressive, moderate, conservative };

inline const char* to_string(RiskClass c) {
  switch (c) {
  case RiskClass::aggressive: return "aggressive";
  case RiskClass::moderate: return "moderate";
  case RiskClass::conservative: return "conservative";
  }
  return "?";
}

inline std::optional<RiskClass> parse_risk_class(std::string_view s) {
  if (s == "aggressive") return RiskClass::aggressive;
  if (s == "moderate") return RiskClass::moderate;
  if (s == "conservative") return RiskClass::conservative;
  return std::nullopt;
}

/// Disjoint ticker sets; each set is kept in descending-volatility order.
struct UniversePartition {
  std::vector<std::string> aggressive;
  std::vector<std::string> moderate;
  std::vector<std::string> conservative;

  const std::vector<std::string>& members(RiskClass c) const {
    switch (c) {
    case RiskClass::aggressive: return aggressive;
    case RiskClass::moderate: return moderate;
    case RiskClass::conservative: return conservative;
    }
    return moderate;
  }
};

/// sigma2[0] = sigma2_0, sigma2[t] = omega + alpha * r[t-1]^2 + beta * sigma2[t-1].
inline std::vector<double> variance_recursion(const GarchParams& p, std::span<const double> returns,
                                              double sigma2_0) {
  p.validate();
  if (!(sigma2_0 > 0.0) || !std::isfinite(sigma2_0))
    throw NumericalError("initial variance must be positive and finite");
  std::vector<double> path(returns.size());
  if (returns.empty()) return path;
  path[0] = sigma2_0;
  for (std::size_t t = 1; t < returns.size(); ++t)
    path[t] = p.omega + p.alpha * returns[t - 1] * returns[t - 1] + p.beta * path[t - 1];
  return path;
}

namespace detail {

inline double gaussian_loglik(std::span<const double> returns, std::span<const double> sigma2) {
  constexpr double half_log_2pi = 0.91893853320467274178; // 0.5 * ln(2 pi)
  double ll = 0.0;
  for (std::size_t t = 0; t < returns.size(); ++t) {
    if (!(sigma2[t] > 0.0)) throw NumericalError("conditional variance underflow in GARCH likelihood");
    ll += -half_log_2pi - 0.5 * std::log(sigma2[t]) - returns[t] * returns[t] / (2.0 * sigma2[t]);
  }
  return ll;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) {
  p = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return std::log(p / (1.0 - p));
}

// Unconstrained (log omega, persistence logit, alpha-share logit) <-> params.
inline GarchParams from_unconstrained(std::span<const double> x) {
  const double persistence = kMaxPersistence * logistic(x[1]);
  const double share = logistic(x[2]);
  return {std::exp(x[0]), persistence * share, persistence * (1.0 - share)};
}

inline std::vector<double> to_unconstrained(const GarchParams& p) {
  const double persistence = p.alpha + p.beta;
  const double share = persistence > 0.0 ? p.alpha / persistence : 0.5;
  return {std::log(p.omega), logit(persistence / kMaxPersistence), logit(share)};
}

inline double sample_variance(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}

} // namespace detail

/// Zero-mean Gaussian log-likelihood (nats) along the variance recursion.
inline double log_likelihood(const GarchParams& p, std::span<const double> returns, double sigma2_0) {
  const auto path = variance_recursion(p, returns, sigma2_0);
  return detail::gaussian_loglik(returns, path);
}

/// Starting point used when the caller supplies none.
inline GarchParams default_garch_init(double sample_var) {
  return {0.05 * sample_var, 0.05, 0.90};
}

/// Maximum-likelihood GARCH(1,1) fit. Parameters are searched in an unconstrained
/// space (omega = exp(a); alpha + beta = 0.9999 * logistic(b), split by logistic(c))
/// with Nelder-Mead, restarted from the incumbent until a restart stops improving.
/// sigma2_0 is the sample variance of the returns.
inline GarchFit fit_garch(std::span<const double> returns, std::optional<GarchParams> init = std::nullopt) {
  if (returns.size() < kMinGarchObservations)
    throw DataError("GARCH fit needs at least " + std::to_string(kMinGarchObservations) +
                    " returns, got " + std::to_string(returns.size()));
  for (double r : returns)
    if (!std::isfinite(r)) throw NumericalError("non-finite return passed to GARCH fit");
  const double var0 = detail::sample_variance(returns);
  if (!(var0 > 0.0) || std::all_of(returns.begin(), returns.end(), [](double r) { return r == 0.0; }))
    throw NumericalError("degenerate GARCH likelihood: returns have zero variance");

  const GarchParams start = init.value_or(default_garch_init(var0));
  start.validate();

  auto objective = [&](const std::vector<double>& x) {
    const GarchParams p = detail::from_unconstrained(x);
    if (!p.valid()) return HUGE_VAL;
    double ll = 0.0;
    try {
      ll = log_likelihood(p, returns, var0);
    } catch (const NumericalError&) {
      return HUGE_VAL;
    }
    return std::isfinite(ll) ? -ll : HUGE_VAL;
  };

  // The start itself is a candidate, so the fit never reports a worse likelihood.
  std::vector<double> best_x = detail::to_unconstrained(start);
  GarchParams best_p = start;
  double best_value = -log_likelihood(start, returns, var0);

  NelderMeadOptions opt;
  std::size_t used = 0;
  bool converged = false;
  std::vector<double> from = best_x;
  for (int round = 0; round < 4 && used < opt.max_iterations; ++round) {
    NelderMeadOptions this_round = opt;
    this_round.max_iterations = opt.max_iterations - used;
    const auto res = nelder_mead(objective, from, this_round);
    used += res.iterations;
    converged = res.converged;
    const double previous = best_value;
    if (res.value < best_value) {
      best_value = res.value;
      best_x = res.x;
      best_p = detail::from_unconstrained(res.x);
    }
    if (!res.converged || previous - best_value <= 1e-9 * std::max(1.0, std::abs(previous))) break;
    from = best_x;
  }

  GarchFit fit;
  fit.params = best_p;
  fit.sigma2_path = variance_recursion(best_p, returns, var0);
  fit.loglik = detail::gaussian_loglik(returns, fit.sigma2_path);
  fit.converged = converged;
  fit.iterations = used;
  return fit;
}

/// Per-day expected variances for days t+1 .. t+horizon after the fit window.
inline std::vector<double> forecast_variance_path(const GarchFit& fit, double last_eps2, int horizon) {
  if (horizon < 1) throw UsageError("forecast horizon must be at least 1 day");
  if (fit.sigma2_path.empty()) throw NumericalError("GARCH fit has no variance path");
  const auto& p = fit.params;
  const double next = p.omega + p.alpha * last_eps2 + p.beta * fit.sigma2_path.back();
  const double long_run = p.unconditional_variance();
  const double persistence = p.persistence();
  std::vector<double> out(static_cast<std::size_t>(horizon));
  double decay = 1.0;
  for (int h = 0; h < horizon; ++h) {
    out[static_cast<std::size_t>(h)] = h == 0 ? next : long_run + decay * (next - long_run);
    decay *= persistence;
  }
  return out;
}

/// Annualized volatility sqrt(252 * mean of the per-day forecast variances).
inline VolatilityScore forecast_volatility(const GarchFit& fit, double last_eps2, int horizon,
                                           std::string ticker = {}) {
  const auto path = forecast_variance_path(fit, last_eps2, horizon);
  double mean = 0.0;
  for (double v : path) mean += v;
  mean /= static_cast<double>(path.size());
  return {std::move(ticker), std::sqrt(kTradingDaysPerYear * mean)};
}

/// Sort by volatility (descending, ties by ticker ascending) and cut into
/// k_top aggressive, k_bottom conservative, the remainder moderate.
inline UniversePartition classify_universe(std::vector<VolatilityScore> scores, std::size_t k_top,
                                           std::size_t k_bottom) {
  if (k_top + k_bottom >= scores.size())
    throw UsageError("k_top + k_bottom (" + std::to_string(k_top + k_bottom) +
                     ") must be smaller than the universe size (" + std::to_string(scores.size()) + ")");
  std::sort(scores.begin(), scores.end(), [](const VolatilityScore& a, const VolatilityScore& b) {
    if (a.annual_vol != b.annual_vol) return a.annual_vol > b.annual_vol;
    return a.ticker < b.ticker;
  });
  std::vector<std::string> seen;
  for (const auto& s : scores) {
    if (!(s.annual_vol > 0.0) || !std::isfinite(s.annual_vol))
      throw NumericalError("volatility score for " + s.ticker + " is not positive");
    seen.push_back(s.ticker);
  }
  std::sort(seen.begin(), seen.end());
  if (auto dup = std::adjacent_find(seen.begin(), seen.end()); dup != seen.end())
    throw UsageError("duplicate ticker " + *dup + " in volatility scores");

  UniversePartition out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i < k_top)
      out.aggressive.push_back(scores[i].ticker);
    else if (i >= scores.size() - k_bottom)
      out.conservative.push_back(scores[i].ticker);
    else
      out.moderate.push_back(scores[i].ticker);
  }
  return out;
}

/// One asset's fit and forecast score.
struct AssetVolatility {
  VolatilityScore score;
  GarchFit fit;
};

/// Fits every column of the panel over price days [first, last] and scores it.
inline std::vector<AssetVolatility> score_panel(const PricePanel& panel, std::size_t first, std::size_t last,
                                                int horizon) {
  if (last >= panel.days() || first >= last) throw DataError("invalid GARCH fit window");
  std::vector<AssetVolatility> out;
  std::string failures;
  bool data_failure = false;
  for (std::size_t i = 0; i < panel.assets(); ++i) {
    std::vector<double> r;
    r.reserve(last - first);
    for (std::size_t t = first; t < last; ++t) r.push_back(std::log(panel.price(t + 1, i) / panel.price(t, i)));
    try {
      GarchFit fit = fit_garch(r);
      const double last_eps2 = r.back() * r.back();
      auto score = forecast_volatility(fit, last_eps2, horizon, panel.tickers()[i]);
      out.push_back({std::move(score), std::move(fit)});
    } catch (const Error& e) {
      data_failure = data_failure || e.code() == ExitCode::data;
      failures += (failures.empty() ? "" : "; ") + panel.tickers()[i] + ": " + e.what();
    }
  }
  if (!failures.empty()) {
    if (data_failure) throw DataError("GARCH scoring failed for " + failures);
    throw NumericalError("GARCH scoring failed for " + failures);
  }
  return out;
}

} // namespace volport
