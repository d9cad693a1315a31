#pragma once

// Baseline strategies run through the same environment and cost model as the
// learned policy: long-only mean-variance, daily equal weight, and a
// price-weighted buy-and-hold index proxy.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "volport/errors.hpp"
#include "volport/portfolio_env.hpp"

namespace volport {

struct MvoConfig {
  double kappa = 10.0;              // risk aversion
  std::size_t window = 252;         // estimation window, days of returns
  std::size_t rebalance_every = 63; // days between re-estimations
  std::size_t iterations = 5000;
  double ridge = 1e-8;
};

struct StrategyLedger {
  std::string name;
  EpisodeLedger ledger;
};

/// Euclidean projection onto {w >= 0, sum w = 1} (sort-and-threshold).
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    cumsum += u[static_cast<std::size_t>(j)];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<std::size_t>(j)] - t > 0.0) theta = t;
  }
  Eigen::VectorXd w = (v.array() - theta).max(0.0).matrix();
  // Remove the rounding residue so the result sums to one.
  const double s = w.sum();
  return s > 0.0 ? Eigen::VectorXd(w / s) : Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
}

inline double mvo_objective(const Eigen::VectorXd& w, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                            double kappa) {
  return mu.dot(w) - 0.5 * kappa * w.dot(sigma * w);
}

/// Maximizes mu'w - (kappa/2) w'Sigma w over the simplex by projected gradient
/// ascent from the uniform portfolio with step 1/L, L = max row sum of |kappa Sigma|.
/// Returns the best iterate seen.
inline Eigen::VectorXd mvo_weights(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double kappa = 10.0,
                                   std::size_t iterations = 5000) {
  const Eigen::Index n = mu.size();
  if (n == 0 || sigma.rows() != n || sigma.cols() != n) throw UsageError("MVO input dimensions do not match");
  if (!mu.allFinite() || !sigma.allFinite() || !(kappa >= 0.0)) throw NumericalError("non-finite MVO inputs");
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw NumericalError("MVO covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) throw NumericalError("MVO covariance is not positive semi-definite");

  const Eigen::MatrixXd q = kappa * sigma;
  double lipschitz = q.cwiseAbs().rowwise().sum().maxCoeff();
  if (!(lipschitz > 0.0)) lipschitz = 1.0;
  const double step = 1.0 / lipschitz;

  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  Eigen::VectorXd best = w;
  double best_value = mvo_objective(w, mu, sigma, kappa);
  for (std::size_t k = 0; k < iterations; ++k) {
    const Eigen::VectorXd grad = mu - q * w;
    w = project_to_simplex(w + step * grad);
    const double value = mvo_objective(w, mu, sigma, kappa);
    if (value > best_value) {
      best_value = value;
      best = w;
    }
  }
  return best;
}

/// Sample mean and ridge-regularized covariance of the `window` log returns ending on day t.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> estimate_moments(const PricePanel& panel, std::size_t t,
                                                                    std::size_t window, double ridge) {
  if (window < 2 || t < window)
    throw DataError("MVO needs " + std::to_string(window) + " days of history before day " + std::to_string(t));
  const auto& p = panel.prices();
  const auto n = static_cast<Eigen::Index>(panel.assets());
  Eigen::MatrixXd r(static_cast<Eigen::Index>(window), n);
  for (std::size_t k = 0; k < window; ++k) {
    const auto row = static_cast<Eigen::Index>(t - window + k);
    r.row(static_cast<Eigen::Index>(k)) = (p.row(row + 1).array() / p.row(row).array()).log().matrix();
  }
  const Eigen::VectorXd mu = r.colwise().mean().transpose();
  const Eigen::MatrixXd centered = r.rowwise() - mu.transpose();
  Eigen::MatrixXd sigma = centered.transpose() * centered / static_cast<double>(window - 1);
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  sigma.diagonal().array() += ridge;
  return {mu, sigma};
}

/// Re-optimizes every rebalance_every days from the trailing window; holds (drifts) in between.
inline StrategyLedger mvo_backtest(const PortfolioEnv& env, std::size_t start, std::size_t end,
                                   const MvoConfig& cfg = {}) {
  if (cfg.rebalance_every < 1) throw UsageError("rebalance_every must be at least 1");
  if (cfg.window < env.assets() + 2) throw UsageError("MVO window must be at least n + 2 days");
  if (start < cfg.window) throw DataError("insufficient history for the MVO estimation window");
  auto policy = [&](const EnvState& s) -> Eigen::VectorXd {
    if ((s.t - s.start) % cfg.rebalance_every != 0) return s.weights;
    const auto [mu, sigma] = estimate_moments(env.panel(), s.t, cfg.window, cfg.ridge);
    return mvo_weights(mu, sigma, cfg.kappa, cfg.iterations);
  };
  return {"MVO", run_episode(env, policy, start, end)};
}

/// Rebalances to 1/n every day.
inline StrategyLedger equal_weight_backtest(const PortfolioEnv& env, std::size_t start, std::size_t end) {
  const Eigen::VectorXd uniform =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(env.assets()), 1.0 / static_cast<double>(env.assets()));
  return {"Equal-Weighted", run_episode(env, [&](const EnvState&) { return uniform; }, start, end)};
}

/// Buys price-proportional weights on the first day and never trades again.
inline StrategyLedger index_backtest(const PortfolioEnv& env, std::size_t start, std::size_t end) {
  const Eigen::VectorXd first = env.panel().prices().row(static_cast<Eigen::Index>(start)).transpose();
  const Eigen::VectorXd initial = first / first.sum();
  auto policy = [&](const EnvState& s) -> Eigen::VectorXd { return s.t == s.start ? initial : s.weights; };
  return {"Index-proxy", run_episode(env, policy, start, end)};
}

} // namespace volport
