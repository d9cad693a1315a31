#pragma once

// Price ingestion, alignment, returns, technical indicators, rolling
// covariance, and a seeded GARCH(1,1) panel generator.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "volport/date.hpp"
#include "volport/errors.hpp"
#include "volport/garch_params.hpp"

namespace volport {

struct PriceBar {
  Date date;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  double adj_close = 0.0;
  std::int64_t volume = 0;
};

struct PriceSeries {
  std::string ticker;
  std::vector<PriceBar> bars;
};

/// Date-aligned adjusted-close matrix, T rows (days) by n columns (tickers).
class PricePanel {
public:
  PricePanel() = default;
  PricePanel(std::vector<std::string> tickers, std::vector<Date> dates, Eigen::MatrixXd prices)
      : tickers_(std::move(tickers)), dates_(std::move(dates)), prices_(std::move(prices)) {
    if (prices_.rows() != static_cast<Eigen::Index>(dates_.size()) ||
        prices_.cols() != static_cast<Eigen::Index>(tickers_.size()))
      throw DataError("price panel shape does not match its dates/tickers");
    if (!std::is_sorted(tickers_.begin(), tickers_.end()) ||
        std::adjacent_find(tickers_.begin(), tickers_.end()) != tickers_.end())
      throw DataError("price panel tickers must be unique and lexicographically ordered");
    for (std::size_t t = 1; t < dates_.size(); ++t)
      if (!(dates_[t - 1] < dates_[t])) throw DataError("price panel dates must be strictly increasing");
    for (Eigen::Index t = 0; t < prices_.rows(); ++t)
      for (Eigen::Index i = 0; i < prices_.cols(); ++i)
        if (!(prices_(t, i) > 0.0) || !std::isfinite(prices_(t, i)))
          throw DataError("non-positive price for " + tickers_[static_cast<std::size_t>(i)] +
                          " on " + dates_[static_cast<std::size_t>(t)].str());
  }

  std::size_t days() const { return dates_.size(); }
  std::size_t assets() const { return tickers_.size(); }
  const std::vector<std::string>& tickers() const { return tickers_; }
  const std::vector<Date>& dates() const { return dates_; }
  const Eigen::MatrixXd& prices() const { return prices_; }
  double price(std::size_t t, std::size_t i) const {
    return prices_(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i));
  }

  std::size_t ticker_index(const std::string& ticker) const {
    auto it = std::lower_bound(tickers_.begin(), tickers_.end(), ticker);
    if (it == tickers_.end() || *it != ticker) throw DataError("unknown ticker " + ticker);
    return static_cast<std::size_t>(it - tickers_.begin());
  }

  /// Column subset; the result is re-sorted lexicographically.
  PricePanel select(std::vector<std::string> subset) const {
    std::sort(subset.begin(), subset.end());
    Eigen::MatrixXd out(prices_.rows(), static_cast<Eigen::Index>(subset.size()));
    for (std::size_t j = 0; j < subset.size(); ++j)
      out.col(static_cast<Eigen::Index>(j)) =
          prices_.col(static_cast<Eigen::Index>(ticker_index(subset[j])));
    return PricePanel(std::move(subset), dates_, std::move(out));
  }

  /// First day index whose date is >= d (days() if none).
  std::size_t first_on_or_after(const Date& d) const {
    return static_cast<std::size_t>(std::lower_bound(dates_.begin(), dates_.end(), d) - dates_.begin());
  }

  /// Last day index whose date is <= d; throws if every date is later.
  std::size_t last_on_or_before(const Date& d) const {
    auto it = std::upper_bound(dates_.begin(), dates_.end(), d);
    if (it == dates_.begin()) throw DataError("no trading day on or before " + d.str());
    return static_cast<std::size_t>(it - dates_.begin()) - 1;
  }

private:
  std::vector<std::string> tickers_;
  std::vector<Date> dates_;
  Eigen::MatrixXd prices_;
};

/// Daily log returns; row t is ln(p[t+1] / p[t]) and is dated dates[t+1] of the panel.
struct ReturnPanel {
  std::vector<Date> dates;
  Eigen::MatrixXd returns;
};

struct IndicatorConfig {
  int ema_fast = 12;
  int ema_slow = 26;
  int rsi_period = 14;
  int sma_short = 30;
  int sma_long = 60;

  /// First day index at which every indicator is defined.
  std::size_t warmup() const {
    const int w = std::max({ema_slow - 1, rsi_period, sma_short - 1, sma_long - 1});
    return static_cast<std::size_t>(w);
  }
};

/// Per-day, per-asset indicators; each matrix is T x n like the panel.
struct FeatureSet {
  Eigen::MatrixXd macd;
  Eigen::MatrixXd rsi;
  Eigen::MatrixXd sma_ratio_short;
  Eigen::MatrixXd sma_ratio_long;
  std::size_t warmup = 0; // rows before this index are not valid observations

  std::size_t days() const { return static_cast<std::size_t>(macd.rows()); }
  std::size_t assets() const { return static_cast<std::size_t>(macd.cols()); }
};

struct CovarianceWindow {
  Date as_of;
  Eigen::MatrixXd matrix;
};

/// Per-asset generator spec for simulate_garch_panel.
struct AssetSpec {
  std::string ticker;
  GarchParams params;
  double drift = 0.0; // daily log drift
  double initial_price = 100.0;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    out.push_back(trim(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size() && std::isfinite(out);
}

inline bool parse_int(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (res.ec == std::errc{} && res.ptr == s.data() + s.size()) return true;
  // Some exports write volume as "123.0".
  double d = 0.0;
  if (parse_double(s, d) && d == std::floor(d) && std::abs(d) < 9.0e18) {
    out = static_cast<std::int64_t>(d);
    return true;
  }
  return false;
}

// FNV-1a; stable across platforms, unlike std::hash.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace detail

inline constexpr std::string_view kYahooHeader = "Date,Open,High,Low,Close,Adj Close,Volume";

/// Reads one Yahoo-layout CSV; the ticker is the file stem.
inline PriceSeries load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string where = path.filename().string();

  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kYahooHeader)
    throw DataError(where + ": malformed header, expected '" + std::string(kYahooHeader) + "'");

  PriceSeries series;
  series.ticker = path.stem().string();
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto fields = detail::split(line);
    const std::string at = where + " row " + std::to_string(row);
    if (fields.size() != 7) throw DataError(at + ": expected 7 fields, got " + std::to_string(fields.size()));
    const auto date = Date::parse(fields[0]);
    if (!date) throw DataError(at + ": unparsable date '" + std::string(fields[0]) + "'");
    PriceBar bar;
    bar.date = *date;
    double* targets[] = {&bar.open, &bar.high, &bar.low, &bar.close, &bar.adj_close};
    for (std::size_t k = 0; k < 5; ++k)
      if (!detail::parse_double(fields[k + 1], *targets[k]))
        throw DataError(at + ": unparsable number '" + std::string(fields[k + 1]) + "'");
    if (!detail::parse_int(fields[6], bar.volume))
      throw DataError(at + ": unparsable volume '" + std::string(fields[6]) + "'");
    for (double* v : targets)
      if (!(*v > 0.0)) throw DataError(at + ": non-positive price");
    if (bar.volume < 0) throw DataError(at + ": negative volume");
    if (bar.low > std::min({bar.open, bar.close, bar.high}) ||
        bar.high < std::max({bar.open, bar.close, bar.low}))
      throw DataError(at + ": inconsistent high/low range");
    series.bars.push_back(bar);
  }
  std::stable_sort(series.bars.begin(), series.bars.end(),
                   [](const PriceBar& a, const PriceBar& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < series.bars.size(); ++i)
    if (series.bars[i].date == series.bars[i - 1].date)
      throw DataError(where + ": duplicate date " + series.bars[i].date.str());
  return series;
}

/// Inner-joins series on date; columns are ordered by ticker.
inline PricePanel align_panel(std::vector<PriceSeries> series) {
  if (series.size() < 2) throw DataError("need at least 2 price series to build a panel");
  std::sort(series.begin(), series.end(),
            [](const PriceSeries& a, const PriceSeries& b) { return a.ticker < b.ticker; });
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].bars.empty()) throw DataError("empty price series for " + series[i].ticker);
    if (i > 0 && series[i].ticker == series[i - 1].ticker)
      throw DataError("duplicate ticker " + series[i].ticker);
  }

  std::vector<Date> common;
  for (const auto& b : series[0].bars) common.push_back(b.date);
  std::sort(common.begin(), common.end());
  for (std::size_t i = 1; i < series.size(); ++i) {
    std::vector<Date> other;
    for (const auto& b : series[i].bars) other.push_back(b.date);
    std::sort(other.begin(), other.end());
    std::vector<Date> both;
    std::set_intersection(common.begin(), common.end(), other.begin(), other.end(),
                          std::back_inserter(both));
    common = std::move(both);
  }
  if (common.size() < 2)
    throw DataError("date intersection of the price series has " + std::to_string(common.size()) +
                    " day(s); need at least 2");

  Eigen::MatrixXd prices(static_cast<Eigen::Index>(common.size()),
                         static_cast<Eigen::Index>(series.size()));
  std::vector<std::string> tickers;
  for (std::size_t i = 0; i < series.size(); ++i) {
    tickers.push_back(series[i].ticker);
    std::map<Date, double> by_date;
    for (const auto& b : series[i].bars) by_date.emplace(b.date, b.adj_close);
    for (std::size_t t = 0; t < common.size(); ++t)
      prices(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = by_date.at(common[t]);
  }
  return PricePanel(std::move(tickers), std::move(common), std::move(prices));
}

inline ReturnPanel log_returns(const PricePanel& panel) {
  if (panel.days() < 2) throw DataError("log returns need at least 2 days of prices");
  const auto& p = panel.prices();
  const Eigen::Index T = p.rows();
  ReturnPanel out;
  out.dates.assign(panel.dates().begin() + 1, panel.dates().end());
  out.returns.resize(T - 1, p.cols());
  for (Eigen::Index t = 0; t + 1 < T; ++t)
    for (Eigen::Index i = 0; i < p.cols(); ++i) out.returns(t, i) = std::log(p(t + 1, i) / p(t, i));
  return out;
}

/// MACD(fast, slow), Wilder RSI, and price/SMA ratios for every asset.
inline FeatureSet compute_indicators(const PricePanel& panel, const IndicatorConfig& cfg = {}) {
  if (cfg.ema_fast < 1 || cfg.ema_slow < 1 || cfg.rsi_period < 1 || cfg.sma_short < 1 || cfg.sma_long < 1)
    throw UsageError("indicator periods must be positive");
  const std::size_t warmup = cfg.warmup();
  if (panel.days() <= warmup)
    throw DataError("panel has " + std::to_string(panel.days()) + " days; indicators need more than " +
                    std::to_string(warmup));

  const auto& p = panel.prices();
  const Eigen::Index T = p.rows();
  const Eigen::Index n = p.cols();
  FeatureSet fs;
  fs.warmup = warmup;
  fs.macd = Eigen::MatrixXd::Zero(T, n);
  fs.rsi = Eigen::MatrixXd::Constant(T, n, 50.0);
  fs.sma_ratio_short = Eigen::MatrixXd::Ones(T, n);
  fs.sma_ratio_long = Eigen::MatrixXd::Ones(T, n);

  const double k_fast = 2.0 / (cfg.ema_fast + 1.0);
  const double k_slow = 2.0 / (cfg.ema_slow + 1.0);
  const int rp = cfg.rsi_period;

  for (Eigen::Index i = 0; i < n; ++i) {
    // EMAs seeded at the first price.
    double fast = p(0, i), slow = p(0, i);
    for (Eigen::Index t = 0; t < T; ++t) {
      if (t > 0) {
        fast += k_fast * (p(t, i) - fast);
        slow += k_slow * (p(t, i) - slow);
      }
      fs.macd(t, i) = fast - slow;
    }

    double avg_gain = 0.0, avg_loss = 0.0;
    for (Eigen::Index t = 1; t < T; ++t) {
      const double change = p(t, i) - p(t - 1, i);
      const double gain = change > 0.0 ? change : 0.0;
      const double loss = change < 0.0 ? -change : 0.0;
      if (t <= rp) {
        avg_gain += gain / rp;
        avg_loss += loss / rp;
      } else {
        avg_gain = (avg_gain * (rp - 1) + gain) / rp;
        avg_loss = (avg_loss * (rp - 1) + loss) / rp;
      }
      if (t < rp) continue;
      double rsi = 50.0;
      if (avg_loss > 0.0)
        rsi = 100.0 - 100.0 / (1.0 + avg_gain / avg_loss);
      else if (avg_gain > 0.0)
        rsi = 100.0;
      fs.rsi(t, i) = rsi;
    }

    auto sma_ratio = [&](int period, Eigen::MatrixXd& out) {
      for (Eigen::Index t = period - 1; t < T; ++t)
        out(t, i) = p(t, i) / (p.col(i).segment(t + 1 - period, period).sum() / period);
    };
    sma_ratio(cfg.sma_short, fs.sma_ratio_short);
    sma_ratio(cfg.sma_long, fs.sma_ratio_long);
  }
  return fs;
}

/// Sample covariance (denominator window-1) of the trailing `window` returns,
/// plus ridge * I. Element k covers return rows [k, k + window).
inline std::vector<CovarianceWindow> rolling_covariance(const ReturnPanel& rp, std::size_t window,
                                                        double ridge = 1e-8) {
  if (window < 2) throw UsageError("covariance window must be at least 2");
  const auto m = static_cast<std::size_t>(rp.returns.rows());
  if (m < window)
    throw DataError("covariance needs " + std::to_string(window) + " returns, have " + std::to_string(m));
  const auto w = static_cast<Eigen::Index>(window);
  std::vector<CovarianceWindow> out;
  out.reserve(m - window + 1);
  for (std::size_t end = window; end <= m; ++end) {
    const auto block = rp.returns.middleRows(static_cast<Eigen::Index>(end) - w, w);
    const Eigen::RowVectorXd mean = block.colwise().mean();
    const Eigen::MatrixXd centered = block.rowwise() - mean;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(window - 1);
    cov = 0.5 * (cov + cov.transpose()).eval();
    cov.diagonal().array() += ridge;
    out.push_back({rp.dates[end - 1], std::move(cov)});
  }
  return out;
}

/// Simulates T days of prices per asset: eps_t = sigma_t * z_t, sigma_t^2 from the
/// GARCH(1,1) recursion started at the unconditional variance, p_t = p_{t-1} exp(drift + eps_t).
/// Each asset draws from its own stream keyed by (seed, ticker), so adding assets does
/// not perturb existing columns.
inline PricePanel simulate_garch_panel(std::vector<AssetSpec> specs, std::size_t T, std::uint64_t seed,
                                       Date start = Date(2010, 1, 4)) {
  if (specs.empty()) throw UsageError("simulation needs at least one asset spec");
  if (T < 2) throw UsageError("simulation needs at least 2 days");
  std::sort(specs.begin(), specs.end(),
            [](const AssetSpec& a, const AssetSpec& b) { return a.ticker < b.ticker; });
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].params.validate();
    if (!(specs[i].initial_price > 0.0) || !std::isfinite(specs[i].drift))
      throw NumericalError("invalid drift or initial price for " + specs[i].ticker);
    if (i > 0 && specs[i].ticker == specs[i - 1].ticker)
      throw UsageError("duplicate ticker " + specs[i].ticker);
  }

  std::vector<Date> dates;
  dates.reserve(T);
  Date d = start.is_weekday() ? start : start.next_weekday();
  for (std::size_t t = 0; t < T; ++t) {
    dates.push_back(d);
    d = d.next_weekday();
  }

  const auto n = static_cast<Eigen::Index>(specs.size());
  Eigen::MatrixXd prices(static_cast<Eigen::Index>(T), n);
  std::vector<std::string> tickers;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& spec = specs[static_cast<std::size_t>(i)];
    tickers.push_back(spec.ticker);
    const std::uint64_t key = detail::stable_hash(spec.ticker);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);

    const auto& g = spec.params;
    double sigma2 = g.unconditional_variance();
    double log_p = std::log(spec.initial_price);
    prices(0, i) = spec.initial_price;
    for (std::size_t t = 1; t < T; ++t) {
      const double eps = std::sqrt(sigma2) * normal(rng);
      log_p += spec.drift + eps;
      prices(static_cast<Eigen::Index>(t), i) = std::exp(log_p);
      sigma2 = g.omega + g.alpha * eps * eps + g.beta * sigma2;
    }
  }
  return PricePanel(std::move(tickers), std::move(dates), std::move(prices));
}

} // namespace volport
