#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "volport/benchmarks.hpp"

using namespace volport;
using namespace volport::testing;

namespace {

// Exhaustive search over the simplex grid with the given step (n = 2 or 3).
double grid_best(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double kappa, double step) {
  const int m = static_cast<int>(std::lround(1.0 / step));
  double best = -HUGE_VAL;
  if (mu.size() == 2) {
    for (int i = 0; i <= m; ++i) {
      const Eigen::Vector2d w(i * step, 1.0 - i * step);
      best = std::max(best, mu.dot(w) - 0.5 * kappa * w.dot(sigma * w));
    }
  } else {
    for (int i = 0; i <= m; ++i)
      for (int j = 0; i + j <= m; ++j) {
        const Eigen::Vector3d w(i * step, j * step, (m - i - j) * step);
        best = std::max(best, mu.dot(w) - 0.5 * kappa * w.dot(sigma * w));
      }
  }
  return best;
}

} // namespace

TEST(SimplexProjection, Properties) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 2.0);
  for (int k = 0; k < 200; ++k) {
    Eigen::VectorXd v(5);
    for (int i = 0; i < 5; ++i) v(i) = z(rng);
    const auto w = project_to_simplex(v);
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    EXPECT_GE(w.minCoeff(), 0.0);
    // Optimality: no simplex vertex is closer to v than w by more than rounding.
    for (int i = 0; i < 5; ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(5);
      e(i) = 1.0;
      EXPECT_LE((w - v).squaredNorm(), (e - v).squaredNorm() + 1e-12);
    }
  }
  const Eigen::Vector3d inside(0.2, 0.3, 0.5);
  EXPECT_LT((project_to_simplex(inside) - inside).norm(), 1e-15);
}

TEST(MvoWeights, SymmetricInputsGiveUniform) {
  const auto w = mvo_weights(Eigen::VectorXd::Constant(4, 0.001), 0.04 * Eigen::MatrixXd::Identity(4, 4));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(w(i), 0.25, 1e-6);
}

TEST(MvoWeights, TwoAssetGridOracle) {
  const Eigen::Vector2d mu(0.001, 0.0);
  const Eigen::MatrixXd sigma = 0.0001 * Eigen::MatrixXd::Identity(2, 2);
  const auto w = mvo_weights(mu, sigma, 10.0);
  EXPECT_NEAR(mvo_objective(w, mu, sigma, 10.0), grid_best(mu, sigma, 10.0, 0.001), 1e-3);
  EXPECT_NEAR(w(0), 1.0, 1e-9);
}

TEST(MvoWeights, ReturnOnlyLimit) {
  const Eigen::Vector2d mu(0.01, 0.0001);
  const Eigen::MatrixXd sigma = 0.0004 * Eigen::MatrixXd::Identity(2, 2);
  const auto w = mvo_weights(mu, sigma, 1e-6);
  EXPECT_NEAR(w(0), 1.0, 1e-9);
}

TEST(MvoWeights, RandomInstancesMatchGrid) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> z(0.0, 0.5);
  for (int k = 0; k < 20; ++k) {
    Eigen::MatrixXd a(3, 3);
    for (int i = 0; i < 9; ++i) a.data()[i] = z(rng);
    const Eigen::MatrixXd sigma = a * a.transpose();
    Eigen::Vector3d mu(u(rng), u(rng), u(rng));
    const double kappa = 10.0;
    const auto w = mvo_weights(mu, sigma, kappa);
    EXPECT_NEAR(w.sum(), 1.0, 1e-10);
    EXPECT_GE(w.minCoeff(), 0.0);
    const double value = mvo_objective(w, mu, sigma, kappa);
    EXPECT_NEAR(value, grid_best(mu, sigma, kappa, 0.001), 1e-3);
    EXPECT_GE(value, mvo_objective(Eigen::Vector3d::Constant(1.0 / 3.0), mu, sigma, kappa));
  }
}

TEST(MvoWeights, RejectsNonPsd) {
  Eigen::Matrix2d bad;
  bad << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(mvo_weights(Eigen::Vector2d(0.0, 0.0), bad), NumericalError);
}

TEST(MvoBacktest, SingleAssetIsBuyAndHold) {
  const auto env = make_env(random_panel(1, 400, 1));
  const auto ledger = mvo_backtest(env, 300, 399).ledger;
  for (const auto& w : ledger.weights) EXPECT_EQ(w(0), 1.0);
  EXPECT_EQ(ledger.total_costs, 0.0);
  EXPECT_NEAR(ledger.wealth.back() / (1e6 * env.panel().price(399, 0) / env.panel().price(300, 0)), 1.0, 1e-12);
}

TEST(MvoBacktest, SymmetricZeroVarianceInputsStayUniform) {
  const auto env = make_env(growth_panel({1.0005, 1.0005, 1.0005}, 400));
  const auto ledger = mvo_backtest(env, 300, 399).ledger;
  for (std::size_t k = 0; k < ledger.weights.size(); k += 63)
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(ledger.weights[k](i), 1.0 / 3.0, 1e-9);
}

TEST(MvoBacktest, CostMonotoneSameDecisions) {
  const auto panel = random_panel(4, 500, 3);
  EnvConfig cheap, dear;
  cheap.cost_rate = 0.0005;
  dear.cost_rate = 0.002;
  const auto a = mvo_backtest(make_env(panel, cheap), 300, 499).ledger;
  const auto b = mvo_backtest(make_env(panel, dear), 300, 499).ledger;
  EXPECT_GE(a.wealth.back(), b.wealth.back());
  for (std::size_t k = 0; k < a.weights.size(); k += 63) EXPECT_EQ(a.weights[k], b.weights[k]);
  EXPECT_THROW(mvo_backtest(make_env(panel), 100, 499), DataError);
}

TEST(EqualWeight, Properties) {
  const auto env1 = make_env(random_panel(1, 200, 4));
  const auto l1 = equal_weight_backtest(env1, 100, 199).ledger;
  EXPECT_NEAR(l1.wealth.back() / (1e6 * env1.panel().price(199, 0) / env1.panel().price(100, 0)), 1.0, 1e-12);

  const Eigen::MatrixXd col = random_panel(1, 200, 5).prices();
  Eigen::MatrixXd twin(200, 2);
  twin << col, col;
  const auto l2 = equal_weight_backtest(make_env(panel_of(twin)), 100, 199).ledger;
  EXPECT_NEAR(l2.total_costs, 0.0, 1e-9);

  const auto l4 = equal_weight_backtest(make_env(random_panel(4, 200, 6)), 100, 199).ledger;
  for (const auto& w : l4.weights)
    for (int i = 0; i < 4; ++i) EXPECT_EQ(w(i), 0.25);
}

TEST(IndexProxy, Properties) {
  Eigen::MatrixXd flat_start = random_panel(3, 200, 7).prices();
  for (int i = 0; i < 3; ++i) flat_start.col(i) *= 50.0 / flat_start(100, i);
  const auto env = make_env(panel_of(flat_start));
  const auto ledger = index_backtest(env, 100, 199).ledger;
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(ledger.weights[0](i), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(ledger.costs[0], 0.0);

  const auto panel = random_panel(4, 220, 8);
  const auto env2 = make_env(panel);
  const auto l2 = index_backtest(env2, 100, 219).ledger;
  double total_after = 0.0;
  for (std::size_t k = 1; k < l2.costs.size(); ++k) total_after += l2.costs[k];
  EXPECT_EQ(total_after, 0.0);
  // Buy-and-hold identity on the wealth that remains after the first-day trade.
  const Eigen::VectorXd w0 = l2.weights[0];
  double growth = 0.0;
  for (int i = 0; i < 4; ++i) growth += w0(i) * panel.price(219, static_cast<std::size_t>(i)) / panel.price(100, static_cast<std::size_t>(i));
  EXPECT_NEAR(l2.wealth.back() / ((1e6 - l2.costs[0]) * growth), 1.0, 1e-9);
}
