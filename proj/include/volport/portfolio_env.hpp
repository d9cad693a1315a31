#pragma once

// Daily-rebalancing portfolio MDP over a price panel. Long-only, fully
// invested, proportional transaction costs on turnover against drifted weights.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "volport/errors.hpp"
#include "volport/market_data.hpp"

namespace volport {

struct EnvConfig {
  double initial_capital = 1'000'000.0;
  double cost_rate = 0.0005;
  std::size_t lookback = 60;
  double reward_scale = 1.0;
  bool log_reward = false;

  void validate() const {
    if (!(initial_capital > 0.0) || !std::isfinite(initial_capital))
      throw UsageError("initial_capital must be positive");
    if (!(cost_rate >= 0.0 && cost_rate < 1.0)) throw UsageError("cost_rate must lie in [0, 1)");
    if (lookback < 2) throw UsageError("lookback must be at least 2");
    if (!std::isfinite(reward_scale)) throw UsageError("reward_scale must be finite");
  }
};

struct EnvState {
  std::size_t t = 0;     // current day index
  std::size_t start = 0; // episode first day (price normalization anchor)
  std::size_t end = 0;   // episode last day
  double wealth = 0.0;
  Eigen::VectorXd weights; // holdings entering day t, after drift
  Eigen::VectorXd observation;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  double net_return = 0.0;
  double cost_paid = 0.0;
  double turnover = 0.0;
  Eigen::VectorXd target; // post-trade weights chosen for day t
  bool done = false;
};

/// Daily record of one episode. wealth has one more entry than net_returns.
struct EpisodeLedger {
  std::vector<std::string> tickers;
  std::vector<Date> dates;             // days start..end
  std::vector<double> wealth;          // wealth at each date
  std::vector<Eigen::VectorXd> weights; // post-trade weights held over each step
  std::vector<double> net_returns;
  std::vector<double> costs;
  double total_costs = 0.0;
  double initial_capital = 0.0;
  double cost_rate = 0.0;

  std::size_t steps() const { return net_returns.size(); }
};

/// Numerically stable softmax.
inline Eigen::VectorXd action_to_weights(const Eigen::VectorXd& action) {
  if (action.size() == 0) throw UsageError("empty action vector");
  if (!action.allFinite()) throw NumericalError("non-finite action");
  const double m = action.maxCoeff();
  Eigen::VectorXd w = (action.array() - m).exp().matrix();
  return w / w.sum();
}

class PortfolioEnv {
public:
  static constexpr double kCovarianceScale = 252.0;

  PortfolioEnv(PricePanel panel, FeatureSet features, EnvConfig cfg)
      : panel_(std::move(panel)), features_(std::move(features)), cfg_(cfg) {
    cfg_.validate();
    if (features_.days() != panel_.days() || features_.assets() != panel_.assets())
      throw DataError("feature set is not aligned with the price panel");
    if (panel_.days() <= cfg_.lookback)
      throw DataError("panel too short for a " + std::to_string(cfg_.lookback) + "-day covariance lookback");
    covariances_ = rolling_covariance(log_returns(panel_), cfg_.lookback);
  }

  const PricePanel& panel() const { return panel_; }
  const FeatureSet& features() const { return features_; }
  const EnvConfig& config() const { return cfg_; }
  std::size_t assets() const { return panel_.assets(); }
  std::size_t days() const { return panel_.days(); }

  /// Earliest day index at which an observation is fully defined.
  std::size_t warmup() const { return std::max(features_.warmup, cfg_.lookback); }

  std::size_t observation_dim() const {
    const std::size_t n = assets();
    return n * (n + 1) / 2 + 6 * n;
  }

  /// Trailing return covariance ending on day t (includes the ridge).
  const Eigen::MatrixXd& covariance(std::size_t t) const {
    if (t < cfg_.lookback || t >= days()) throw DataError("no covariance window for day " + std::to_string(t));
    return covariances_[t - cfg_.lookback].matrix;
  }

  /// [p_t/p_start] ++ [252 * lower-triangular covariance, row-major]
  /// ++ [macd/p_t] ++ [rsi/100] ++ [p/SMA short] ++ [p/SMA long] ++ [weights].
  Eigen::VectorXd observe(std::size_t t, std::size_t start, const Eigen::VectorXd& weights) const {
    const auto n = static_cast<Eigen::Index>(assets());
    Eigen::VectorXd obs(static_cast<Eigen::Index>(observation_dim()));
    const auto& p = panel_.prices();
    const auto ti = static_cast<Eigen::Index>(t);
    const auto si = static_cast<Eigen::Index>(start);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) obs(k++) = p(ti, i) / p(si, i);
    const auto& cov = covariance(t);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) obs(k++) = kCovarianceScale * cov(i, j);
    for (Eigen::Index i = 0; i < n; ++i) obs(k++) = features_.macd(ti, i) / p(ti, i);
    for (Eigen::Index i = 0; i < n; ++i) obs(k++) = features_.rsi(ti, i) / 100.0;
    for (Eigen::Index i = 0; i < n; ++i) obs(k++) = features_.sma_ratio_short(ti, i);
    for (Eigen::Index i = 0; i < n; ++i) obs(k++) = features_.sma_ratio_long(ti, i);
    for (Eigen::Index i = 0; i < n; ++i) obs(k++) = weights(i);
    return obs;
  }

  /// Starts an episode on day `start` with uniform holdings; `end` defaults to the last day.
  EnvState reset(std::size_t start, std::size_t end = std::numeric_limits<std::size_t>::max()) const {
    if (end == std::numeric_limits<std::size_t>::max()) end = days() - 1;
    if (start < warmup())
      throw DataError("episode start " + std::to_string(start) + " precedes the warm-up of " +
                      std::to_string(warmup()) + " days");
    if (end >= days() || start >= end) throw DataError("invalid episode window");
    EnvState s;
    s.t = start;
    s.start = start;
    s.end = end;
    s.wealth = cfg_.initial_capital;
    s.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(assets()), 1.0 / static_cast<double>(assets()));
    s.observation = observe(start, start, s.weights);
    return s;
  }

  /// Rebalances to `target`, pays cost_rate * turnover * wealth, then lets one day of prices act.
  StepResult step_weights(const EnvState& s, const Eigen::VectorXd& target) const {
    if (s.t >= s.end || s.end >= days()) throw DataError("step past the end of the episode");
    if (target.size() != static_cast<Eigen::Index>(assets())) throw UsageError("target weight dimension mismatch");
    if (!target.allFinite()) throw NumericalError("non-finite target weights");

    const auto t = static_cast<Eigen::Index>(s.t);
    const auto& p = panel_.prices();
    StepResult r;
    r.target = target;
    r.turnover = (target - s.weights).cwiseAbs().sum();
    r.cost_paid = cfg_.cost_rate * r.turnover * s.wealth;
    const Eigen::VectorXd growth = (p.row(t + 1).array() / p.row(t).array()).matrix().transpose();
    const double gross = target.dot(growth);
    const double wealth = (s.wealth - r.cost_paid) * gross;
    if (!(wealth > 0.0) || !std::isfinite(wealth)) throw NumericalError("wealth became non-positive");

    r.net_return = (wealth - s.wealth) / s.wealth;
    r.reward = cfg_.reward_scale * (cfg_.log_reward ? std::log(wealth / s.wealth) : r.net_return);
    r.next.t = s.t + 1;
    r.next.start = s.start;
    r.next.end = s.end;
    r.next.wealth = wealth;
    r.next.weights = target.cwiseProduct(growth) / gross;
    r.next.observation = observe(r.next.t, s.start, r.next.weights);
    r.done = r.next.t == s.end;
    return r;
  }

  StepResult step(const EnvState& s, const Eigen::VectorXd& action) const {
    if (action.size() != static_cast<Eigen::Index>(assets())) throw UsageError("action dimension mismatch");
    return step_weights(s, action_to_weights(action));
  }

private:
  PricePanel panel_;
  FeatureSet features_;
  EnvConfig cfg_;
  std::vector<CovarianceWindow> covariances_;
};

/// Runs `policy(state) -> target weights` from day `start` to day `end`.
template <class Policy>
EpisodeLedger run_episode(const PortfolioEnv& env, Policy&& policy, std::size_t start, std::size_t end) {
  EnvState s = env.reset(start, end);
  EpisodeLedger ledger;
  ledger.tickers = env.panel().tickers();
  ledger.initial_capital = env.config().initial_capital;
  ledger.cost_rate = env.config().cost_rate;
  ledger.dates.push_back(env.panel().dates()[start]);
  ledger.wealth.push_back(s.wealth);
  while (true) {
    StepResult r = env.step_weights(s, policy(static_cast<const EnvState&>(s)));
    ledger.dates.push_back(env.panel().dates()[r.next.t]);
    ledger.wealth.push_back(r.next.wealth);
    ledger.weights.push_back(r.target);
    ledger.net_returns.push_back(r.net_return);
    ledger.costs.push_back(r.cost_paid);
    ledger.total_costs += r.cost_paid;
    const bool done = r.done;
    s = std::move(r.next);
    if (done) break;
  }
  return ledger;
}

} // namespace volport
