#include <gtest/gtest.h>

#include <set>
#include <string>
#include <vector>

#include "cli_util.hpp"
#include "test_util.hpp"
#include "volport/pipeline.hpp"

using namespace volport;
using namespace volport::testing;
namespace pl = volport::pipeline;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

// Simulated 9-asset universe with a matching small config, ingested and classified.
struct Workspace {
  fs::path root, data, out, cfg;

  explicit Workspace(const std::string& name, std::size_t k = 3) {
    root = scratch(name);
    data = root / "data";
    out = root / "out";
    cfg = root / "run.cfg";
    write_text(root / "specs.csv", banded_specs(3));
    write_text(cfg, small_config(data, out, k));
  }
  ~Workspace() { fs::remove_all(root); }

  int cli(const std::string& args) const { return run_cli(args + " --config " + cfg.string()); }
  int simulate(std::size_t days = 900, int seed = 1) const {
    return run_cli("simulate --spec " + (root / "specs.csv").string() + " --out " + data.string() + " --days " +
                   std::to_string(days) + " --seed " + std::to_string(seed));
  }
};

} // namespace

TEST(Config, ParsesFileAndRejectsUnknownKeys) {
  const auto dir = scratch("config");
  write_text(dir / "a.cfg", "# comment\n k_top = 4 \nhidden = 32, 8 # trailing\nlog_reward = true\n"
                            "test_start = 2020-02-03\ncost_rate=0.001\n");
  pl::RunConfig cfg;
  pl::load_config(dir / "a.cfg", cfg);
  EXPECT_EQ(cfg.k_top, 4u);
  EXPECT_EQ(cfg.ppo.hidden, (std::vector<std::size_t>{32, 8}));
  EXPECT_TRUE(cfg.env.log_reward);
  EXPECT_EQ(cfg.test_start, Date(2020, 2, 3));
  EXPECT_EQ(cfg.env.cost_rate, 0.001);

  write_text(dir / "b.cfg", "no_such_key = 1\n");
  EXPECT_THROW(pl::load_config(dir / "b.cfg", cfg), UsageError);
  write_text(dir / "c.cfg", "k_top = -1\n");
  EXPECT_THROW(pl::load_config(dir / "c.cfg", cfg), UsageError);
  write_text(dir / "d.cfg", "just text\n");
  EXPECT_THROW(pl::load_config(dir / "d.cfg", cfg), UsageError);
  EXPECT_THROW(pl::load_config(dir / "missing.cfg", cfg), UsageError);
  fs::remove_all(dir);
}

TEST(Config, Defaults) {
  const pl::RunConfig cfg;
  EXPECT_EQ(cfg.train_start, Date(2010, 1, 1));
  EXPECT_EQ(cfg.test_end, Date(2024, 12, 31));
  EXPECT_EQ(cfg.k_top, 10u);
  EXPECT_EQ(cfg.k_bottom, 10u);
  EXPECT_EQ(cfg.seeds, 5u);
  EXPECT_EQ(cfg.env.initial_capital, 1e6);
  EXPECT_EQ(cfg.env.cost_rate, 0.0005);
  EXPECT_NO_THROW(cfg.validate());
  pl::RunConfig bad = cfg;
  bad.train_end = Date(2023, 6, 1);
  EXPECT_THROW(bad.validate(), UsageError);
}

TEST(Files, PanelCsvRoundTripsExactly) {
  const auto panel = random_panel(4, 50, 3);
  const auto dir = scratch("panel");
  pl::write_atomic(dir / "panel.csv", pl::panel_csv(panel));
  EXPECT_FALSE(fs::exists(dir / "panel.csv.tmp"));
  const auto back = pl::read_panel_csv(dir / "panel.csv");
  EXPECT_EQ(back.tickers(), panel.tickers());
  EXPECT_EQ(back.dates(), panel.dates());
  EXPECT_EQ(back.prices(), panel.prices());
  fs::remove_all(dir);
}

TEST(Files, PartitionSortedByVolatilityAndRoundTrips) {
  const UniversePartition p{{"B", "A"}, {"C"}, {"E", "D"}};
  const std::vector<VolatilityScore> s{{"A", 0.5}, {"B", 0.6}, {"C", 0.3}, {"D", 0.1}, {"E", 0.2}};
  const auto text = pl::partition_csv(p, s);
  const auto rows = lines_of(text);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "B,0.59999999999999998,aggressive");
  EXPECT_EQ(rows[4], "D,0.10000000000000001,conservative");
  const auto dir = scratch("partition");
  pl::write_atomic(dir / "partition.csv", text);
  const auto back = pl::read_partition_csv(dir / "partition.csv");
  EXPECT_EQ(back.aggressive, p.aggressive);
  EXPECT_EQ(back.moderate, p.moderate);
  EXPECT_EQ(back.conservative, p.conservative);
  fs::remove_all(dir);
}

TEST(Files, MetricsCsvHeaderOrderAndUndefinedSharpe) {
  pl::CompareReport r;
  r.rows.push_back({"MVO", {1.0, 2.0, std::nullopt, 3.0, 4.0}, {}, {}});
  r.rows.push_back({"Equal-Weighted", {1.5, 2.5, 0.5, 3.5, 4.5}, {}, {}});
  const auto rows = lines_of(pl::metrics_csv(r));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], "model,annual_return,cumulative_return,sharpe,max_drawdown,annual_volatility");
  EXPECT_EQ(rows[1], "MVO,1,2,NA,3,4");
  EXPECT_EQ(rows[2], "Equal-Weighted,1.5,2.5,0.5,3.5,4.5");
}

TEST(Files, AssetSpecsValidated) {
  const auto dir = scratch("specs");
  write_text(dir / "ok.csv", "ticker,omega,alpha,beta,drift\n# note\nAAA,1e-6,0.1,0.8,0.0002\nBBB,2e-6,0.05,0.9,0,40\n");
  const auto specs = pl::read_asset_specs(dir / "ok.csv");
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_EQ(specs[1].initial_price, 40.0);
  write_text(dir / "bad.csv", "AAA,1e-6,0.5,0.6,0\n");
  EXPECT_THROW(pl::read_asset_specs(dir / "bad.csv"), UsageError);
  write_text(dir / "short.csv", "AAA,1e-6,0.5\n");
  EXPECT_THROW(pl::read_asset_specs(dir / "short.csv"), UsageError);
  fs::remove_all(dir);
}

TEST(Stages, FiveAssetsOneAndOneGiveOneThreeOne) {
  std::vector<AssetSpec> specs;
  for (int i = 0; i < 5; ++i) {
    const double v = 0.004 * (i + 1);
    specs.push_back({"X" + std::to_string(i), {v * v * 0.05, 0.05, 0.90}, 0.0, 100.0});
  }
  const auto panel = simulate_garch_panel(specs, 800, 9);
  pl::RunConfig cfg;
  cfg.train_end = Date(2012, 6, 30);
  cfg.test_start = Date(2012, 7, 1);
  cfg.k_top = 1;
  cfg.k_bottom = 1;
  const auto result = pl::classify(panel, cfg);
  EXPECT_EQ(result.partition.aggressive.size(), 1u);
  EXPECT_EQ(result.partition.moderate.size(), 3u);
  EXPECT_EQ(result.partition.conservative.size(), 1u);
  EXPECT_EQ(result.partition.aggressive[0], "X4");
  EXPECT_EQ(result.partition.conservative[0], "X0");
  cfg.k_top = 3;
  cfg.k_bottom = 2;
  EXPECT_THROW(pl::classify(panel, cfg), UsageError);
}

TEST(Stages, ScoringReportsEveryFailingTicker) {
  Eigen::MatrixXd prices(300, 3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 0.01);
  double p = 100.0;
  for (Eigen::Index t = 0; t < 300; ++t) {
    prices(t, 0) = 50.0;
    prices(t, 1) = p;
    prices(t, 2) = 70.0;
    p *= std::exp(z(rng));
  }
  try {
    score_panel(panel_of(prices), 0, 299, 21);
    FAIL() << "expected a scoring failure";
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("A0"), std::string::npos);
    EXPECT_NE(what.find("A2"), std::string::npos);
    EXPECT_EQ(what.find("A1:"), std::string::npos);
  }
}

TEST(Stages, WindowsMustLieInsideTheData) {
  const auto panel = random_panel(3, 300, 2);
  pl::RunConfig cfg;
  EXPECT_THROW(pl::resolve_windows(panel, cfg), DataError);
  cfg.train_end = Date(2010, 6, 30);
  cfg.test_start = Date(2010, 7, 1);
  cfg.test_end = Date(2011, 2, 1);
  const auto w = pl::resolve_windows(panel, cfg);
  EXPECT_EQ(panel.dates()[w.train_first], Date(2010, 1, 4));
  EXPECT_LT(w.train_last, w.test_first);
  EXPECT_LE(panel.dates()[w.test_last], Date(2011, 2, 1));
  EXPECT_LT(Date(2011, 2, 1), panel.dates()[w.test_last + 1]);
}

TEST(Stages, SummaryAveragesSeedsAndStartsAtZero) {
  const auto env = make_env(random_panel(3, 200, 5));
  const auto a = equal_weight_backtest(env, 70, 199).ledger;
  const auto b = index_backtest(env, 70, 199).ledger;
  const auto row = pl::summarize("x", {a, b}, 0.0);
  EXPECT_EQ(row.cumulative_pct.front(), 0.0);
  const double expect = 0.5 * (100.0 * (a.wealth.back() / a.wealth.front() - 1.0) +
                               100.0 * (b.wealth.back() / b.wealth.front() - 1.0));
  EXPECT_NEAR(row.cumulative_pct.back(), expect, 1e-12);
  const MetricSet runs[] = {compute_metrics(a), compute_metrics(b)};
  EXPECT_EQ(row.metrics.annual_return, average_metrics(runs).annual_return);

  const auto c = equal_weight_backtest(env, 71, 199).ledger;
  EXPECT_THROW(pl::check_comparable({&a, &c}), DataError);
  EXPECT_NO_THROW(pl::check_comparable({&a, &b}));
}

TEST(Cli, SimulateIsDeterministic) {
  Workspace ws("sim");
  ASSERT_EQ(ws.simulate(), 0);
  const auto first = slurp(ws.data / "T00.csv");
  EXPECT_EQ(first.rfind("Date,Open,High,Low,Close,Adj Close,Volume\n", 0), 0u);
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(ws.data)) ++files;
  EXPECT_EQ(files, 9u);
  ASSERT_EQ(ws.simulate(), 0);
  EXPECT_EQ(slurp(ws.data / "T00.csv"), first);
  ASSERT_EQ(ws.simulate(900, 2), 0);
  EXPECT_NE(slurp(ws.data / "T00.csv"), first);
  EXPECT_EQ(run_cli("simulate --spec " + (ws.root / "nope.csv").string()), 1);
}

TEST(Cli, IngestNeedsTwoFilesAndIsAtomic) {
  Workspace ws("ingest");
  ASSERT_EQ(ws.simulate(), 0);
  ASSERT_EQ(ws.cli("ingest"), 0);
  const auto panel = pl::read_panel_csv(ws.out / "panel.csv");
  EXPECT_EQ(panel.assets(), 9u);
  EXPECT_EQ(panel.days(), 900u);

  const fs::path one = ws.root / "one";
  fs::create_directories(one);
  fs::copy_file(ws.data / "T00.csv", one / "T00.csv");
  EXPECT_EQ(ws.cli("ingest --out " + (ws.root / "o1").string() + " --data " + one.string()), 2);
  EXPECT_FALSE(fs::exists(ws.root / "o1" / "panel.csv"));

  const fs::path mixed = ws.root / "mixed";
  fs::create_directories(mixed);
  fs::copy_file(ws.data / "T00.csv", mixed / "T00.csv");
  fs::copy_file(ws.data / "T01.csv", mixed / "T01.csv");
  write_text(mixed / "BAD.csv", "Date,Open,High,Low,Close,Adj Close,Volume\n2010-01-04,1,1,1,-5,1,10\n");
  write_text(mixed / "WORSE.csv", "nonsense\n");
  const fs::path log = ws.root / "log.txt";
  EXPECT_EQ(run_cli("ingest --config " + ws.cfg.string() + " --out " + (ws.root / "o2").string() + " --data " +
                        mixed.string(),
                    log),
            2);
  const auto msg = slurp(log);
  EXPECT_NE(msg.find("BAD.csv"), std::string::npos);
  EXPECT_NE(msg.find("WORSE.csv"), std::string::npos);
  EXPECT_FALSE(fs::exists(ws.root / "o2" / "panel.csv"));
}

TEST(Cli, ExitCodesForUsageErrors) {
  Workspace ws("usage");
  EXPECT_EQ(run_cli("no-such-command"), 1);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("--help"), 0);
  ASSERT_EQ(ws.simulate(), 0);
  ASSERT_EQ(ws.cli("ingest"), 0);
  EXPECT_EQ(ws.cli("classify --k-top 5 --k-bottom 4"), 1);
  EXPECT_EQ(ws.cli("classify --set bogus=1"), 1);
  EXPECT_EQ(ws.cli("classify"), 0);
  EXPECT_EQ(ws.cli("train --class bogus"), 1);
  EXPECT_EQ(run_cli("classify --config " + (ws.root / "none.cfg").string()), 1);
}

TEST(Cli, FullPipelineIsDeterministic) {
  Workspace ws("pipeline");
  ASSERT_EQ(ws.simulate(), 0);
  ASSERT_EQ(ws.cli("ingest"), 0);
  ASSERT_EQ(ws.cli("classify"), 0);
  const auto partition = lines_of(slurp(ws.out / "partition.csv"));
  ASSERT_EQ(partition.size(), 9u);

  // compare names every missing checkpoint before any training.
  const fs::path log = ws.root / "log.txt";
  EXPECT_EQ(run_cli("compare --config " + ws.cfg.string(), log), 2);
  EXPECT_NE(slurp(log).find("moderate_seed0.params"), std::string::npos);

  ASSERT_EQ(ws.cli("train"), 0);
  for (const char* c : {"aggressive", "moderate", "conservative"})
    EXPECT_TRUE(fs::exists(ws.out / (std::string(c) + "_seed0.params")));
  const auto ckpt = slurp(ws.out / "aggressive_seed0.params");
  EXPECT_EQ(lines_of(slurp(ws.out / "train_report.csv")).front(),
            "update,mean_reward,surrogate,value_loss,entropy,clip_fraction");

  ASSERT_EQ(ws.cli("compare"), 0);
  const auto metrics = slurp(ws.out / "metrics.csv");
  const auto rows = lines_of(metrics);
  ASSERT_EQ(rows.size(), 7u);
  const char* order[] = {"Aggressive-DRL", "Moderate-DRL", "Conservative-DRL", "MVO", "Index-proxy", "Equal-Weighted"};
  for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(rows[k + 1].substr(0, rows[k + 1].find(',')), order[k]);
  const auto cumret = lines_of(slurp(ws.out / "cumret_Equal-Weighted.csv"));
  EXPECT_EQ(cumret[0], "date,cumulative_return_pct");
  EXPECT_EQ(cumret[1], "2012-07-02,0");

  ASSERT_EQ(ws.cli("backtest"), 0);
  EXPECT_TRUE(fs::exists(ws.out / "ledger_MVO.csv"));
  EXPECT_TRUE(fs::exists(ws.out / "weights_Aggressive-DRL_seed0.csv"));
  EXPECT_EQ(lines_of(slurp(ws.out / "ledger_MVO.csv")).front(), "date,wealth,net_return,cost_paid");

  ASSERT_EQ(ws.cli("train"), 0);
  EXPECT_EQ(slurp(ws.out / "aggressive_seed0.params"), ckpt);
  ASSERT_EQ(ws.cli("compare"), 0);
  EXPECT_EQ(slurp(ws.out / "metrics.csv"), metrics);

  ASSERT_EQ(ws.cli("compare --reclassify 63"), 0);
  EXPECT_EQ(lines_of(slurp(ws.out / "metrics.csv")).size(), 7u);
}

TEST(Cli, TrainWritesOneCheckpointPerSeed) {
  Workspace ws("seeds");
  ASSERT_EQ(ws.simulate(), 0);
  ASSERT_EQ(ws.cli("ingest"), 0);
  ASSERT_EQ(ws.cli("classify"), 0);
  ASSERT_EQ(ws.cli("train --class conservative --seeds 5 --updates 1"), 0);
  std::set<std::string> params;
  for (std::size_t i = 0; i < 5; ++i) {
    const auto p = ws.out / ("conservative_seed" + std::to_string(i) + ".params");
    ASSERT_TRUE(fs::exists(p));
    params.insert(slurp(p));
  }
  EXPECT_EQ(params.size(), 5u);
  EXPECT_FALSE(fs::exists(ws.out / "conservative_seed5.params"));
  EXPECT_FALSE(fs::exists(ws.out / "aggressive_seed0.params"));
}
