#pragma once

// Proximal policy optimization over PortfolioEnv: seeded rollouts with episode
// wrap-around, generalized advantage estimation, and minibatched Adam on the
// clipped surrogate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "volport/errors.hpp"
#include "volport/metrics.hpp"
#include "volport/policy_core.hpp"
#include "volport/portfolio_env.hpp"

namespace volport {

struct PPOConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  std::size_t epochs_per_update = 10;
  std::size_t minibatch_size = 64;
  double learning_rate = 3e-4;
  double entropy_coef = 0.0;
  double value_coef = 0.5;
  std::size_t rollout_length = 256;
  std::size_t total_updates = 300;
  std::uint64_t seed = 0;
  bool normalize_advantages = true;
  double max_grad_norm = 0.5; // <= 0 disables clipping
  std::vector<std::size_t> hidden{64, 64};

  void validate() const {
    if (!(clip_eps > 0.0)) throw UsageError("clip_eps must be positive");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw UsageError("gamma must lie in [0, 1]");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("lambda must lie in [0, 1]");
    if (epochs_per_update < 1 || minibatch_size < 1 || rollout_length < 1)
      throw UsageError("epochs, minibatch size and rollout length must be at least 1");
    if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
  }
};

struct TrajectoryBatch {
  std::vector<Eigen::VectorXd> observations;
  std::vector<Eigen::VectorXd> actions;
  std::vector<double> log_probs; // behavior policy, recorded at sample time
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<bool> dones;
  double bootstrap_value = 0.0; // V(s) after the last transition, 0 if it ended an episode
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return rewards.size(); }
};

struct UpdateStats {
  double mean_reward = 0.0;
  double surrogate = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

struct TrainReport {
  std::vector<UpdateStats> updates;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

struct TrainedPolicy {
  ApproximatorSpec spec;
  ParameterVector params;
  TrainReport report;
};

/// delta_t = r_t + gamma V_{t+1} - V_t, A_t = delta_t + gamma lambda A_{t+1},
/// with V_T = terminal_value and A_T = 0. Returns (advantages, advantages + values).
inline std::pair<std::vector<double>, std::vector<double>> gae(std::span<const double> rewards,
                                                               std::span<const double> values,
                                                               double terminal_value, double gamma, double lambda) {
  if (rewards.size() != values.size()) throw UsageError("GAE: rewards and values differ in length");
  const std::size_t T = rewards.size();
  std::vector<double> adv(T), ret(T);
  double next_adv = 0.0, next_value = terminal_value;
  for (std::size_t t = T; t-- > 0;) {
    const double delta = rewards[t] + gamma * next_value - values[t];
    adv[t] = delta + gamma * lambda * next_adv;
    ret[t] = adv[t] + values[t];
    next_adv = adv[t];
    next_value = values[t];
  }
  return {adv, ret};
}

/// GAE over a batch that may contain episode ends; each segment is closed
/// with value 0 at a done flag and with `bootstrap_value` at the batch end.
inline void compute_advantages(TrajectoryBatch& batch, double gamma, double lambda) {
  const std::size_t T = batch.size();
  if (batch.values.size() != T || batch.dones.size() != T) throw UsageError("trajectory arrays differ in length");
  batch.advantages.assign(T, 0.0);
  batch.returns.assign(T, 0.0);
  std::size_t begin = 0;
  for (std::size_t t = 0; t < T; ++t) {
    const bool last = t + 1 == T;
    if (!batch.dones[t] && !last) continue;
    const double terminal = batch.dones[t] ? 0.0 : batch.bootstrap_value;
    const std::span<const double> r(batch.rewards.data() + begin, t + 1 - begin);
    const std::span<const double> v(batch.values.data() + begin, t + 1 - begin);
    auto [adv, ret] = gae(r, v, terminal, gamma, lambda);
    std::copy(adv.begin(), adv.end(), batch.advantages.begin() + static_cast<std::ptrdiff_t>(begin));
    std::copy(ret.begin(), ret.end(), batch.returns.begin() + static_cast<std::ptrdiff_t>(begin));
    begin = t + 1;
  }
}

/// Rescales to zero mean and unit (population) standard deviation; constant inputs are only centred.
inline void normalize_advantages(std::vector<double>& adv) {
  if (adv.size() < 2) return;
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double ss = 0.0;
  for (double a : adv) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / static_cast<double>(adv.size()));
  for (double& a : adv) a = sd > 0.0 ? (a - mean) / sd : a - mean;
}

struct SurrogateResult {
  double loss = 0.0;
  double surrogate = 0.0; // mean clipped contribution (to be maximized)
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  GradientVector grad;
};

inline constexpr double kMaxLogRatio = 20.0;

/// PPO loss over `indices` of the batch:
/// -mean(min(rho A, clip(rho, 1-eps, 1+eps) A)) + c_v mean((V - R)^2) - c_e mean(H).
inline SurrogateResult clipped_surrogate(const ActorCritic& net, const ParameterVector& params,
                                         const TrajectoryBatch& batch, std::span<const std::size_t> indices,
                                         double clip_eps, double value_coef = 0.5, double entropy_coef = 0.0) {
  if (batch.advantages.size() != batch.size() || batch.returns.size() != batch.size())
    throw UsageError("advantages must be computed before the surrogate loss");
  if (indices.empty()) throw UsageError("empty minibatch");
  const auto n = static_cast<Eigen::Index>(net.spec().n_assets);
  const double inv_b = 1.0 / static_cast<double>(indices.size());

  SurrogateResult res;
  res.grad = GradientVector::Zero(params.size());
  std::size_t clipped = 0;
  OutputGradient up{Eigen::VectorXd(n), Eigen::VectorXd(n), 0.0};
  for (std::size_t idx : indices) {
    const auto out = net.forward(params, batch.observations[idx]);
    const auto& a = batch.actions[idx];
    const double adv = batch.advantages[idx];
    const double raw_log_ratio = gaussian_log_prob(out, a) - batch.log_probs[idx];
    const double log_ratio = std::clamp(raw_log_ratio, -kMaxLogRatio, kMaxLogRatio);
    const double rho = std::exp(log_ratio);
    const double rho_clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps);
    const double unclipped_term = rho * adv, clipped_term = rho_clipped * adv;
    const double contribution = std::min(unclipped_term, clipped_term);
    if (std::abs(rho - 1.0) > clip_eps) ++clipped;

    const double value_err = out.value - batch.returns[idx];
    const double entropy = gaussian_entropy(out);
    res.surrogate += contribution * inv_b;
    res.value_loss += value_err * value_err * inv_b;
    res.entropy += entropy * inv_b;

    // d(loss)/d(log pi): the unclipped branch carries rho * A, the clipped branch is flat.
    const bool ratio_live = unclipped_term <= clipped_term && raw_log_ratio == log_ratio;
    const double dlogp = ratio_live ? -rho * adv * inv_b : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double inv_var = std::exp(-2.0 * out.log_std(i));
      const double diff = a(i) - out.mean(i);
      up.mean(i) = dlogp * diff * inv_var;
      up.log_std(i) = dlogp * (diff * diff * inv_var - 1.0) - entropy_coef * inv_b;
    }
    up.value = value_coef * 2.0 * value_err * inv_b;
    net.accumulate_gradient(params, batch.observations[idx], up, res.grad);
  }
  res.clip_fraction = static_cast<double>(clipped) / static_cast<double>(indices.size());
  res.loss = -res.surrogate + value_coef * res.value_loss - entropy_coef * res.entropy;
  return res;
}

/// Position of the rollout collector inside the training window.
struct RolloutCursor {
  EnvState state;
  std::size_t window_start = 0;
  std::size_t window_end = 0;
};

inline RolloutCursor make_cursor(const PortfolioEnv& env, std::size_t start, std::size_t end) {
  return {env.reset(start, end), start, end};
}

/// Samples `length` transitions from the Gaussian policy. When the training
/// window is exhausted the episode restarts at the window start.
template <class Rng>
TrajectoryBatch collect_rollout(const PortfolioEnv& env, const ActorCritic& net, const ParameterVector& params,
                                RolloutCursor& cursor, std::size_t length, Rng& rng) {
  if (length < 1) throw UsageError("rollout length must be at least 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Eigen::Index>(env.assets());
  TrajectoryBatch b;
  for (std::size_t k = 0; k < length; ++k) {
    const auto out = net.forward(params, cursor.state.observation);
    Eigen::VectorXd action(n);
    for (Eigen::Index i = 0; i < n; ++i) action(i) = out.mean(i) + std::exp(out.log_std(i)) * normal(rng);
    const double log_prob = gaussian_log_prob(out, action);
    StepResult r = env.step(cursor.state, action);
    b.observations.push_back(cursor.state.observation);
    b.actions.push_back(std::move(action));
    b.log_probs.push_back(log_prob);
    b.rewards.push_back(r.reward);
    b.values.push_back(out.value);
    b.dones.push_back(r.done);
    cursor.state = r.done ? env.reset(cursor.window_start, cursor.window_end) : std::move(r.next);
  }
  b.bootstrap_value = b.dones.back() ? 0.0 : net.forward(params, cursor.state.observation).value;
  return b;
}

namespace detail {

inline void clip_grad_norm(GradientVector& g, double max_norm) {
  if (!(max_norm > 0.0)) return;
  const double norm = g.norm();
  if (norm > max_norm) g *= max_norm / norm;
}

} // namespace detail

/// Runs cfg.total_updates PPO updates on days [train_start, train_end]. Deterministic given cfg.seed.
inline TrainedPolicy train(const PortfolioEnv& env, std::size_t train_start, std::size_t train_end,
                           const PPOConfig& cfg) {
  cfg.validate();
  if (train_end < train_start || train_end - train_start < cfg.rollout_length)
    throw DataError("training window shorter than the rollout length");
  const auto t0 = std::chrono::steady_clock::now();
  const ActorCritic net({env.observation_dim(), cfg.hidden, env.assets()});
  TrainedPolicy out;
  out.spec = net.spec();
  out.params = net.init_params(cfg.seed);
  out.report.seed = cfg.seed;
  if (cfg.total_updates == 0) return out;

  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
  AdamState adam;
  RolloutCursor cursor = make_cursor(env, train_start, train_end);
  std::vector<std::size_t> order;
  for (std::size_t u = 0; u < cfg.total_updates; ++u) {
    TrajectoryBatch batch = collect_rollout(env, net, out.params, cursor, cfg.rollout_length, rng);
    compute_advantages(batch, cfg.gamma, cfg.lambda);
    if (cfg.normalize_advantages) normalize_advantages(batch.advantages);

    UpdateStats stats;
    stats.mean_reward = std::accumulate(batch.rewards.begin(), batch.rewards.end(), 0.0) /
                        static_cast<double>(batch.size());
    order.resize(batch.size());
    std::size_t minibatches = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t first = 0; first < order.size(); first += cfg.minibatch_size) {
        const std::size_t count = std::min(cfg.minibatch_size, order.size() - first);
        auto res = clipped_surrogate(net, out.params, batch, std::span(order).subspan(first, count), cfg.clip_eps,
                                     cfg.value_coef, cfg.entropy_coef);
        detail::clip_grad_norm(res.grad, cfg.max_grad_norm);
        adam_step(out.params, res.grad, adam, cfg.learning_rate);
        stats.surrogate += res.surrogate;
        stats.value_loss += res.value_loss;
        stats.entropy += res.entropy;
        stats.clip_fraction += res.clip_fraction;
        ++minibatches;
      }
    }
    const auto m = static_cast<double>(minibatches);
    stats.surrogate /= m;
    stats.value_loss /= m;
    stats.entropy /= m;
    stats.clip_fraction /= m;
    out.report.updates.push_back(stats);
  }
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Deterministic weights: softmax of the policy mean for the current observation.
inline auto greedy_policy(const ActorCritic& net, const ParameterVector& params) {
  return [&net, &params](const EnvState& s) { return action_to_weights(net.forward(params, s.observation).mean); };
}

/// Out-of-sample run over days [start, end] with mean actions.
inline EpisodeLedger evaluate(const PortfolioEnv& env, const ApproximatorSpec& spec, const ParameterVector& params,
                              std::size_t start, std::size_t end) {
  if (end <= start) throw DataError("empty evaluation window");
  if (spec.input_dim != env.observation_dim() || spec.n_assets != env.assets())
    throw UsageError("policy dimensions do not match the environment");
  const ActorCritic net(spec);
  return run_episode(env, greedy_policy(net, params), start, end);
}

struct SearchTrial {
  PPOConfig config;
  double score = -std::numeric_limits<double>::infinity();
};

/// Seeded random search over learning rate, clip range and rollout length.
/// Each candidate trains on [train_start, train_end] and is scored by the
/// Sharpe ratio of its greedy policy on [valid_start, valid_end].
inline std::vector<SearchTrial> random_search(const PortfolioEnv& env, std::size_t train_start, std::size_t train_end,
                                              std::size_t valid_start, std::size_t valid_end, const PPOConfig& base,
                                              std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> log_lr(std::log(1e-4), std::log(3e-3));
  std::uniform_real_distribution<double> clip(0.1, 0.3);
  const std::size_t lengths[] = {128, 256, 512};
  std::uniform_int_distribution<int> pick(0, 2);
  std::vector<SearchTrial> out;
  for (std::size_t k = 0; k < trials; ++k) {
    SearchTrial trial;
    trial.config = base;
    trial.config.learning_rate = std::exp(log_lr(rng));
    trial.config.clip_eps = clip(rng);
    trial.config.rollout_length = lengths[pick(rng)];
    const auto trained = train(env, train_start, train_end, trial.config);
    const auto ledger = evaluate(env, trained.spec, trained.params, valid_start, valid_end);
    if (ledger.steps() >= 3) {
      if (const auto s = metrics::sharpe(ledger.net_returns)) trial.score = *s;
    }
    out.push_back(trial);
  }
  std::stable_sort(out.begin(), out.end(), [](const SearchTrial& a, const SearchTrial& b) { return a.score > b.score; });
  return out;
}

} // namespace volport
