#pragma once

// End-to-end orchestration behind the command-line tool: configuration,
// on-disk artifact formats, and the ingest / classify / train / backtest /
// compare / simulate stages. Every file is written to a temporary sibling and
// renamed into place.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "volport/benchmarks.hpp"
#include "volport/errors.hpp"
#include "volport/garch.hpp"
#include "volport/market_data.hpp"
#include "volport/metrics.hpp"
#include "volport/policy_core.hpp"
#include "volport/portfolio_env.hpp"
#include "volport/ppo_agent.hpp"

namespace volport::pipeline {

namespace fs = std::filesystem;

struct RunConfig {
  fs::path data_dir = "data";
  fs::path out_dir = "out";
  Date train_start{2010, 1, 1};
  Date train_end{2022, 12, 31};
  Date test_start{2023, 1, 1};
  Date test_end{2024, 12, 31};
  std::size_t k_top = 10;
  std::size_t k_bottom = 10;
  int forecast_horizon = 21;
  std::size_t reclassify_days = 0; // 0 keeps the single partition fixed at test start
  EnvConfig env;
  IndicatorConfig indicators;
  PPOConfig ppo;
  MvoConfig mvo;
  std::size_t seeds = 5;
  std::uint64_t base_seed = 0;
  std::size_t search_trials = 0;
  std::size_t threads = 0; // 0 uses the hardware concurrency
  double risk_free_rate = 0.0;

  void validate() const {
    if (!(train_end < test_start)) throw UsageError("train_end must precede test_start");
    if (!(train_start < train_end) || !(test_start < test_end)) throw UsageError("empty train or test window");
    if (seeds < 1) throw UsageError("seeds must be at least 1");
    if (forecast_horizon < 1) throw UsageError("forecast_horizon must be at least 1");
    env.validate();
    ppo.validate();
  }
};

namespace detail {

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class T>
T parse_number(const std::string& key, std::string_view text) {
  text = volport::detail::trim(text);
  if constexpr (std::is_floating_point_v<T>) {
    double v = 0.0;
    if (!volport::detail::parse_double(text, v) || !std::isfinite(v))
      throw UsageError("invalid number for " + key + ": '" + std::string(text) + "'");
    return v;
  } else {
    std::int64_t v = 0;
    if (!volport::detail::parse_int(text, v) || v < 0)
      throw UsageError("invalid non-negative integer for " + key + ": '" + std::string(text) + "'");
    return static_cast<T>(v);
  }
}

inline bool parse_bool(const std::string& key, std::string_view text) {
  text = volport::detail::trim(text);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw UsageError("invalid boolean for " + key + ": '" + std::string(text) + "'");
}

inline Date parse_date(const std::string& key, std::string_view text) {
  const auto d = Date::parse(volport::detail::trim(text));
  if (!d) throw UsageError("invalid date for " + key + ": '" + std::string(text) + "'");
  return *d;
}

} // namespace detail

/// Applies one `key = value` setting; unknown keys are usage errors.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_number;
  const std::map<std::string, std::function<void()>> setters{
      {"data_dir", [&] { c.data_dir = std::string(volport::detail::trim(value)); }},
      {"out_dir", [&] { c.out_dir = std::string(volport::detail::trim(value)); }},
      {"train_start", [&] { c.train_start = detail::parse_date(key, value); }},
      {"train_end", [&] { c.train_end = detail::parse_date(key, value); }},
      {"test_start", [&] { c.test_start = detail::parse_date(key, value); }},
      {"test_end", [&] { c.test_end = detail::parse_date(key, value); }},
      {"k_top", [&] { c.k_top = parse_number<std::size_t>(key, value); }},
      {"k_bottom", [&] { c.k_bottom = parse_number<std::size_t>(key, value); }},
      {"forecast_horizon", [&] { c.forecast_horizon = parse_number<int>(key, value); }},
      {"reclassify_days", [&] { c.reclassify_days = parse_number<std::size_t>(key, value); }},
      {"initial_capital", [&] { c.env.initial_capital = parse_number<double>(key, value); }},
      {"cost_rate", [&] { c.env.cost_rate = parse_number<double>(key, value); }},
      {"lookback", [&] { c.env.lookback = parse_number<std::size_t>(key, value); }},
      {"reward_scale", [&] { c.env.reward_scale = parse_number<double>(key, value); }},
      {"log_reward", [&] { c.env.log_reward = detail::parse_bool(key, value); }},
      {"ema_fast", [&] { c.indicators.ema_fast = parse_number<int>(key, value); }},
      {"ema_slow", [&] { c.indicators.ema_slow = parse_number<int>(key, value); }},
      {"rsi_period", [&] { c.indicators.rsi_period = parse_number<int>(key, value); }},
      {"sma_short", [&] { c.indicators.sma_short = parse_number<int>(key, value); }},
      {"sma_long", [&] { c.indicators.sma_long = parse_number<int>(key, value); }},
      {"gamma", [&] { c.ppo.gamma = parse_number<double>(key, value); }},
      {"lambda", [&] { c.ppo.lambda = parse_number<double>(key, value); }},
      {"clip_eps", [&] { c.ppo.clip_eps = parse_number<double>(key, value); }},
      {"epochs_per_update", [&] { c.ppo.epochs_per_update = parse_number<std::size_t>(key, value); }},
      {"minibatch_size", [&] { c.ppo.minibatch_size = parse_number<std::size_t>(key, value); }},
      {"learning_rate", [&] { c.ppo.learning_rate = parse_number<double>(key, value); }},
      {"entropy_coef", [&] { c.ppo.entropy_coef = parse_number<double>(key, value); }},
      {"value_coef", [&] { c.ppo.value_coef = parse_number<double>(key, value); }},
      {"rollout_length", [&] { c.ppo.rollout_length = parse_number<std::size_t>(key, value); }},
      {"total_updates", [&] { c.ppo.total_updates = parse_number<std::size_t>(key, value); }},
      {"normalize_advantages", [&] { c.ppo.normalize_advantages = detail::parse_bool(key, value); }},
      {"max_grad_norm", [&] { c.ppo.max_grad_norm = parse_number<double>(key, value); }},
      {"hidden",
       [&] {
         c.ppo.hidden.clear();
         for (auto part : volport::detail::split(value, ','))
           c.ppo.hidden.push_back(parse_number<std::size_t>(key, part));
       }},
      {"seeds", [&] { c.seeds = parse_number<std::size_t>(key, value); }},
      {"seed", [&] { c.base_seed = parse_number<std::uint64_t>(key, value); }},
      {"search_trials", [&] { c.search_trials = parse_number<std::size_t>(key, value); }},
      {"threads", [&] { c.threads = parse_number<std::size_t>(key, value); }},
      {"risk_free_rate", [&] { c.risk_free_rate = parse_number<double>(key, value); }},
      {"mvo_kappa", [&] { c.mvo.kappa = parse_number<double>(key, value); }},
      {"mvo_window", [&] { c.mvo.window = parse_number<std::size_t>(key, value); }},
      {"mvo_rebalance_every", [&] { c.mvo.rebalance_every = parse_number<std::size_t>(key, value); }},
      {"mvo_iterations", [&] { c.mvo.iterations = parse_number<std::size_t>(key, value); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw UsageError("unknown configuration key '" + key + "'");
  it->second();
}

/// Reads a flat `key = value` file; `#` starts a comment.
inline void load_config(const fs::path& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = volport::detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw UsageError(path.string() + " line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, std::string(volport::detail::trim(body.substr(0, eq))),
                  std::string(volport::detail::trim(body.substr(eq + 1))));
  }
}

// ---------------------------------------------------------------------------
// Files

inline void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// `date,<TICKER>...` with one row per day of adjusted closes.
inline std::string panel_csv(const PricePanel& panel) {
  std::string s = "date";
  for (const auto& t : panel.tickers()) s += "," + t;
  s += "\n";
  for (std::size_t t = 0; t < panel.days(); ++t) {
    s += panel.dates()[t].str();
    for (std::size_t i = 0; i < panel.assets(); ++i) s += "," + detail::fmt(panel.price(t, i));
    s += "\n";
  }
  return s;
}

inline PricePanel read_panel_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open panel cache " + path.string() + " (run ingest first)");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty panel cache");
  const auto header = volport::detail::split(line);
  if (header.size() < 3 || volport::detail::trim(header[0]) != "date")
    throw DataError(path.string() + ": malformed panel header");
  std::vector<std::string> tickers;
  for (std::size_t i = 1; i < header.size(); ++i) tickers.emplace_back(volport::detail::trim(header[i]));
  std::vector<Date> dates;
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (volport::detail::trim(line).empty()) continue;
    ++row;
    const auto fields = volport::detail::split(line);
    const std::string at = path.string() + " row " + std::to_string(row);
    if (fields.size() != header.size()) throw DataError(at + ": wrong field count");
    const auto d = Date::parse(volport::detail::trim(fields[0]));
    if (!d) throw DataError(at + ": unparsable date");
    dates.push_back(*d);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      double v = 0.0;
      if (!volport::detail::parse_double(fields[i], v)) throw DataError(at + ": unparsable price");
      values.push_back(v);
    }
  }
  Eigen::MatrixXd prices(static_cast<Eigen::Index>(dates.size()), static_cast<Eigen::Index>(tickers.size()));
  for (Eigen::Index t = 0; t < prices.rows(); ++t)
    for (Eigen::Index i = 0; i < prices.cols(); ++i)
      prices(t, i) = values[static_cast<std::size_t>(t * prices.cols() + i)];
  return PricePanel(std::move(tickers), std::move(dates), std::move(prices));
}

/// Lines of `TICKER,annual_vol,class`, highest volatility first.
inline std::string partition_csv(const UniversePartition& p, const std::vector<VolatilityScore>& scores) {
  std::map<std::string, double> vol;
  for (const auto& s : scores) vol[s.ticker] = s.annual_vol;
  std::string out;
  for (RiskClass c : {RiskClass::aggressive, RiskClass::moderate, RiskClass::conservative})
    for (const auto& t : p.members(c)) out += t + "," + detail::fmt(vol.at(t)) + "," + to_string(c) + "\n";
  return out;
}

inline UniversePartition read_partition_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open partition file " + path.string() + " (run classify first)");
  UniversePartition p;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (volport::detail::trim(line).empty()) continue;
    ++row;
    const auto f = volport::detail::split(line);
    const auto c = f.size() == 3 ? parse_risk_class(volport::detail::trim(f[2])) : std::nullopt;
    if (!c) throw DataError(path.string() + " row " + std::to_string(row) + ": expected TICKER,annual_vol,class");
    std::string ticker(volport::detail::trim(f[0]));
    switch (*c) {
    case RiskClass::aggressive: p.aggressive.push_back(std::move(ticker)); break;
    case RiskClass::moderate: p.moderate.push_back(std::move(ticker)); break;
    case RiskClass::conservative: p.conservative.push_back(std::move(ticker)); break;
    }
  }
  return p;
}

inline std::string ledger_csv(const EpisodeLedger& l) {
  std::string s = "date,wealth,net_return,cost_paid\n";
  for (std::size_t k = 0; k < l.wealth.size(); ++k) {
    const bool first = k == 0;
    s += l.dates[k].str() + "," + detail::fmt(l.wealth[k]) + "," + detail::fmt(first ? 0.0 : l.net_returns[k - 1]) +
         "," + detail::fmt(first ? 0.0 : l.costs[k - 1]) + "\n";
  }
  return s;
}

/// Post-trade weights, dated by the day the trade is placed.
inline std::string weights_csv(const EpisodeLedger& l) {
  std::string s = "date";
  for (const auto& t : l.tickers) s += "," + t;
  s += "\n";
  for (std::size_t k = 0; k < l.weights.size(); ++k) {
    s += l.dates[k].str();
    for (Eigen::Index i = 0; i < l.weights[k].size(); ++i) s += "," + detail::fmt(l.weights[k](i));
    s += "\n";
  }
  return s;
}

inline std::string train_report_csv(const std::vector<UpdateStats>& rows) {
  std::string s = "update,mean_reward,surrogate,value_loss,entropy,clip_fraction\n";
  for (std::size_t u = 0; u < rows.size(); ++u) {
    const auto& r = rows[u];
    s += std::to_string(u + 1) + "," + detail::fmt(r.mean_reward) + "," + detail::fmt(r.surrogate) + "," +
         detail::fmt(r.value_loss) + "," + detail::fmt(r.entropy) + "," + detail::fmt(r.clip_fraction) + "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Stages

/// Day indices of the train and test windows inside a panel.
struct Windows {
  std::size_t train_first = 0, train_last = 0, test_first = 0, test_last = 0;
};

inline Windows resolve_windows(const PricePanel& panel, const RunConfig& cfg) {
  Windows w;
  w.train_first = panel.first_on_or_after(cfg.train_start);
  w.train_last = panel.last_on_or_before(cfg.train_end);
  w.test_first = panel.first_on_or_after(cfg.test_start);
  w.test_last = panel.last_on_or_before(cfg.test_end);
  if (w.train_first >= panel.days() || w.train_last <= w.train_first)
    throw DataError("train window " + cfg.train_start.str() + ".." + cfg.train_end.str() + " is outside the data");
  if (w.test_first >= panel.days() || w.test_last <= w.test_first)
    throw DataError("test window " + cfg.test_start.str() + ".." + cfg.test_end.str() + " is outside the data");
  return w;
}

template <class T, class F>
std::vector<T> parallel_map(std::size_t count, std::size_t threads, F&& f) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<T> out;
  out.reserve(count);
  for (std::size_t first = 0; first < count; first += threads) {
    std::vector<std::future<T>> batch;
    for (std::size_t i = first; i < std::min(count, first + threads); ++i)
      batch.push_back(std::async(std::launch::async, f, i));
    for (auto& fut : batch) out.push_back(fut.get());
  }
  return out;
}

/// Reads every `*.csv` under `dir` (sorted by name) and inner-joins them. All
/// per-file failures are collected before reporting.
inline PricePanel ingest(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("data directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.size() < 2)
    throw DataError("found " + std::to_string(files.size()) + " ticker CSV file(s) in " + dir.string() +
                    "; need at least 2");
  std::vector<PriceSeries> series;
  std::string errors;
  for (const auto& f : files) {
    try {
      series.push_back(load_csv(f));
    } catch (const Error& e) {
      errors += std::string("\n  ") + e.what();
    }
  }
  if (!errors.empty()) throw DataError("corrupt input files:" + errors);
  return align_panel(std::move(series));
}

struct Classification {
  UniversePartition partition;
  std::vector<AssetVolatility> assets;
};

/// GARCH-scores every asset on returns inside [first, last] and splits the universe.
inline Classification classify_window(const PricePanel& panel, std::size_t first, std::size_t last,
                                      const RunConfig& cfg) {
  Classification out;
  out.assets = score_panel(panel, first, last, cfg.forecast_horizon);
  std::vector<VolatilityScore> scores;
  for (const auto& a : out.assets) scores.push_back(a.score);
  out.partition = classify_universe(std::move(scores), cfg.k_top, cfg.k_bottom);
  return out;
}

inline Classification classify(const PricePanel& panel, const RunConfig& cfg) {
  const auto w = resolve_windows(panel, cfg);
  return classify_window(panel, w.train_first, w.train_last, cfg);
}

inline PortfolioEnv make_env(const PricePanel& panel, const RunConfig& cfg) {
  return PortfolioEnv(panel, compute_indicators(panel, cfg.indicators), cfg.env);
}

inline PortfolioEnv class_env(const PricePanel& panel, const UniversePartition& partition, RiskClass cls,
                              const RunConfig& cfg) {
  const auto& members = partition.members(cls);
  if (members.empty()) throw DataError(std::string("risk class ") + to_string(cls) + " is empty");
  return make_env(panel.select(members), cfg);
}

inline fs::path checkpoint_path(const fs::path& dir, RiskClass cls, std::size_t seed_index) {
  return dir / (std::string(to_string(cls)) + "_seed" + std::to_string(seed_index) + ".params");
}

inline std::string model_name(RiskClass cls) {
  switch (cls) {
  case RiskClass::aggressive: return "Aggressive-DRL";
  case RiskClass::moderate: return "Moderate-DRL";
  case RiskClass::conservative: return "Conservative-DRL";
  }
  return {};
}

struct ClassTraining {
  PPOConfig config; // after optional random search
  std::vector<TrainedPolicy> runs;
};

/// Trains cfg.seeds independent policies on the class sub-panel over the train window.
/// The optional search validates on the final fifth of the train window.
inline ClassTraining train_class(const PricePanel& panel, const UniversePartition& partition, RiskClass cls,
                                 const RunConfig& cfg) {
  const auto env = class_env(panel, partition, cls, cfg);
  const auto w = resolve_windows(panel, cfg);
  const std::size_t first = std::max(w.train_first, env.warmup());
  if (w.train_last <= first) throw DataError("train window ends inside the indicator warm-up");
  ClassTraining out;
  out.config = cfg.ppo;
  if (cfg.search_trials > 0) {
    const std::size_t split = w.train_last - (w.train_last - first) / 5;
    const auto trials = random_search(env, first, split, split, w.train_last, cfg.ppo, cfg.search_trials,
                                      cfg.base_seed);
    out.config = trials.front().config;
  }
  out.runs = parallel_map<TrainedPolicy>(cfg.seeds, cfg.threads, [&](std::size_t i) {
    PPOConfig c = out.config;
    c.seed = cfg.base_seed + i;
    return train(env, first, w.train_last, c);
  });
  return out;
}

/// Per-update mean of several training reports of equal length.
inline std::vector<UpdateStats> average_reports(const std::vector<TrainedPolicy>& runs) {
  std::vector<UpdateStats> avg(runs.front().report.updates.size());
  for (const auto& r : runs)
    for (std::size_t u = 0; u < avg.size(); ++u) {
      const auto& s = r.report.updates[u];
      avg[u].mean_reward += s.mean_reward;
      avg[u].surrogate += s.surrogate;
      avg[u].value_loss += s.value_loss;
      avg[u].entropy += s.entropy;
      avg[u].clip_fraction += s.clip_fraction;
    }
  const auto k = static_cast<double>(runs.size());
  for (auto& a : avg) {
    a.mean_reward /= k;
    a.surrogate /= k;
    a.value_loss /= k;
    a.entropy /= k;
    a.clip_fraction /= k;
  }
  return avg;
}

inline std::vector<fs::path> missing_checkpoints(const fs::path& dir, std::span<const RiskClass> classes,
                                                 std::size_t seeds) {
  std::vector<fs::path> missing;
  for (RiskClass c : classes)
    for (std::size_t i = 0; i < seeds; ++i)
      if (!fs::exists(checkpoint_path(dir, c, i))) missing.push_back(checkpoint_path(dir, c, i));
  return missing;
}

inline void require_checkpoints(const fs::path& dir, std::span<const RiskClass> classes, std::size_t seeds) {
  const auto missing = missing_checkpoints(dir, classes, seeds);
  if (missing.empty()) return;
  std::string names;
  for (const auto& m : missing) names += " " + m.string();
  throw DataError("missing checkpoint(s):" + names);
}

inline std::vector<std::pair<ApproximatorSpec, ParameterVector>> load_class_checkpoints(const fs::path& dir,
                                                                                         RiskClass cls,
                                                                                         std::size_t seeds) {
  const RiskClass one[] = {cls};
  require_checkpoints(dir, one, seeds);
  std::vector<std::pair<ApproximatorSpec, ParameterVector>> out;
  for (std::size_t i = 0; i < seeds; ++i) out.push_back(load_checkpoint(checkpoint_path(dir, cls, i)));
  return out;
}

/// Test-window run of one policy whose class membership is re-derived every
/// cfg.reclassify_days days from a trailing window as long as the train
/// window. Accounting uses the full panel; non-members are sold.
inline EpisodeLedger evaluate_reclassified(const PricePanel& panel, RiskClass cls, const ApproximatorSpec& spec,
                                           const ParameterVector& params, const RunConfig& cfg) {
  const auto w = resolve_windows(panel, cfg);
  const auto full = make_env(panel, cfg);
  const std::size_t fit_len = w.train_last - w.train_first;
  struct Segment {
    std::vector<std::size_t> columns;
    PortfolioEnv env;
  };
  std::vector<Segment> segments;
  for (std::size_t t = w.test_first; t < w.test_last; t += cfg.reclassify_days) {
    if (t < fit_len) throw DataError("not enough history to reclassify at " + panel.dates()[t].str());
    const auto members = classify_window(panel, t - fit_len, t, cfg).partition.members(cls);
    auto sub = panel.select(members);
    std::vector<std::size_t> cols;
    for (const auto& m : sub.tickers()) cols.push_back(panel.ticker_index(m));
    if (cols.size() != spec.n_assets) throw UsageError("class size differs from the trained policy");
    segments.push_back({std::move(cols), make_env(sub, cfg)});
  }
  const ActorCritic net(spec);
  auto policy = [&](const EnvState& s) -> Eigen::VectorXd {
    const auto& seg = segments[(s.t - w.test_first) / cfg.reclassify_days];
    const auto k = static_cast<Eigen::Index>(seg.columns.size());
    Eigen::VectorXd held(k);
    for (Eigen::Index j = 0; j < k; ++j) held(j) = s.weights(static_cast<Eigen::Index>(seg.columns[static_cast<std::size_t>(j)]));
    held = held.sum() > 0.0 ? Eigen::VectorXd(held / held.sum()) : Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    const Eigen::VectorXd sub = action_to_weights(net.forward(params, seg.env.observe(s.t, w.test_first, held)).mean);
    Eigen::VectorXd target = Eigen::VectorXd::Zero(s.weights.size());
    for (Eigen::Index j = 0; j < k; ++j) target(static_cast<Eigen::Index>(seg.columns[static_cast<std::size_t>(j)])) = sub(j);
    return target;
  };
  return run_episode(full, policy, w.test_first, w.test_last);
}

/// Test-window ledgers, one per seed, for one risk class.
inline std::vector<EpisodeLedger> evaluate_class(const PricePanel& panel, const UniversePartition& partition,
                                                 RiskClass cls, const RunConfig& cfg) {
  const auto ckpts = load_class_checkpoints(cfg.out_dir, cls, cfg.seeds);
  const auto w = resolve_windows(panel, cfg);
  if (cfg.reclassify_days > 0)
    return parallel_map<EpisodeLedger>(ckpts.size(), cfg.threads, [&](std::size_t i) {
      return evaluate_reclassified(panel, cls, ckpts[i].first, ckpts[i].second, cfg);
    });
  const auto env = class_env(panel, partition, cls, cfg);
  std::vector<EpisodeLedger> out;
  for (const auto& [spec, params] : ckpts) out.push_back(evaluate(env, spec, params, w.test_first, w.test_last));
  return out;
}

/// MVO, index proxy and equal weight on the full universe over the test window.
inline std::vector<StrategyLedger> run_benchmarks(const PricePanel& panel, const RunConfig& cfg) {
  const auto env = make_env(panel, cfg);
  const auto w = resolve_windows(panel, cfg);
  return {mvo_backtest(env, w.test_first, w.test_last, cfg.mvo), index_backtest(env, w.test_first, w.test_last),
          equal_weight_backtest(env, w.test_first, w.test_last)};
}

struct CompareRow {
  std::string model;
  MetricSet metrics;
  std::vector<Date> dates;
  std::vector<double> cumulative_pct; // mean across seeds for learned models
};

struct CompareReport {
  std::vector<CompareRow> rows;
};

inline CompareRow summarize(const std::string& model, const std::vector<EpisodeLedger>& ledgers, double rf) {
  CompareRow row;
  row.model = model;
  std::vector<MetricSet> per_run;
  for (const auto& l : ledgers) per_run.push_back(compute_metrics(l, rf));
  row.metrics = average_metrics(per_run);
  row.dates = ledgers.front().dates;
  row.cumulative_pct.assign(row.dates.size(), 0.0);
  for (const auto& l : ledgers)
    for (std::size_t k = 0; k < l.wealth.size(); ++k)
      row.cumulative_pct[k] += 100.0 * (l.wealth[k] / l.wealth.front() - 1.0) / static_cast<double>(ledgers.size());
  return row;
}

/// Checks that all strategies share one test window, cost rate and starting capital.
inline void check_comparable(const std::vector<const EpisodeLedger*>& ledgers) {
  const auto& ref = *ledgers.front();
  for (const auto* l : ledgers)
    if (l->dates != ref.dates || l->cost_rate != ref.cost_rate || l->initial_capital != ref.initial_capital)
      throw DataError("strategies were evaluated under different windows or cost models");
}

inline constexpr RiskClass kAllClasses[] = {RiskClass::aggressive, RiskClass::moderate, RiskClass::conservative};

inline CompareReport compare(const PricePanel& panel, const UniversePartition& partition, const RunConfig& cfg) {
  require_checkpoints(cfg.out_dir, kAllClasses, cfg.seeds);
  std::vector<std::vector<EpisodeLedger>> drl;
  for (RiskClass c : kAllClasses) drl.push_back(evaluate_class(panel, partition, c, cfg));
  const auto bench = run_benchmarks(panel, cfg);

  std::vector<const EpisodeLedger*> all;
  for (const auto& runs : drl)
    for (const auto& l : runs) all.push_back(&l);
  for (const auto& b : bench) all.push_back(&b.ledger);
  check_comparable(all);

  CompareReport report;
  for (std::size_t k = 0; k < 3; ++k)
    report.rows.push_back(summarize(model_name(kAllClasses[k]), drl[k], cfg.risk_free_rate));
  for (const auto& b : bench) report.rows.push_back(summarize(b.name, {b.ledger}, cfg.risk_free_rate));
  return report;
}

inline std::string metrics_csv(const CompareReport& r) {
  std::string s = "model,annual_return,cumulative_return,sharpe,max_drawdown,annual_volatility\n";
  for (const auto& row : r.rows) {
    const auto& m = row.metrics;
    s += row.model + "," + detail::fmt(m.annual_return) + "," + detail::fmt(m.cumulative_return) + "," +
         (m.sharpe ? detail::fmt(*m.sharpe) : std::string("NA")) + "," + detail::fmt(m.max_drawdown) + "," +
         detail::fmt(m.annual_volatility) + "\n";
  }
  return s;
}

inline std::string cumret_csv(const CompareRow& row) {
  std::string s = "date,cumulative_return_pct\n";
  for (std::size_t k = 0; k < row.dates.size(); ++k) s += row.dates[k].str() + "," + detail::fmt(row.cumulative_pct[k]) + "\n";
  return s;
}

/// Parses `ticker,omega,alpha,beta,drift[,initial_price]` lines; `#` comments and a `ticker,...` header are skipped.
inline std::vector<AssetSpec> read_asset_specs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open simulation spec " + path.string());
  std::vector<AssetSpec> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (volport::detail::trim(line).empty()) continue;
    const auto f = volport::detail::split(line);
    if (volport::detail::trim(f[0]) == "ticker") continue;
    const std::string at = path.string() + " line " + std::to_string(lineno);
    if (f.size() != 5 && f.size() != 6) throw UsageError(at + ": expected ticker,omega,alpha,beta,drift[,p0]");
    AssetSpec spec;
    spec.ticker = std::string(volport::detail::trim(f[0]));
    if (spec.ticker.empty()) throw UsageError(at + ": empty ticker");
    spec.params = {detail::parse_number<double>(at, f[1]), detail::parse_number<double>(at, f[2]),
                   detail::parse_number<double>(at, f[3])};
    spec.drift = detail::parse_number<double>(at, f[4]);
    if (f.size() == 6) spec.initial_price = detail::parse_number<double>(at, f[5]);
    if (!spec.params.valid()) throw UsageError(at + ": GARCH parameters violate omega > 0, alpha, beta >= 0, alpha + beta < 1");
    out.push_back(std::move(spec));
  }
  if (out.empty()) throw UsageError(path.string() + ": no asset specs");
  return out;
}

/// One Yahoo-layout CSV per ticker; every price column carries the simulated close.
inline void write_simulated(const PricePanel& panel, const fs::path& dir) {
  for (std::size_t i = 0; i < panel.assets(); ++i) {
    std::string s = std::string(kYahooHeader) + "\n";
    for (std::size_t t = 0; t < panel.days(); ++t) {
      const std::string p = detail::fmt(panel.price(t, i));
      s += panel.dates()[t].str() + "," + p + "," + p + "," + p + "," + p + "," + p + ",1000000\n";
    }
    write_atomic(dir / (panel.tickers()[i] + ".csv"), s);
  }
}

} // namespace volport::pipeline
