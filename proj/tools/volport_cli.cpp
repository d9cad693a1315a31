// volport: GARCH-classified PPO portfolio pipeline.
//
//   volport simulate --spec specs.csv --out data
//   volport ingest   --config run.cfg
//   volport classify --config run.cfg
//   volport train    --config run.cfg [--class aggressive] [--seeds 5] [--updates 300]
//   volport backtest --config run.cfg
//   volport compare  --config run.cfg
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "volport/pipeline.hpp"

using namespace volport;
namespace pl = volport::pipeline;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "flat key = value configuration file");
  cmd->add_option("--out", a.out, "output directory (overrides out_dir)");
  cmd->add_option("--set", a.overrides, "extra key=value setting, applied after the config file");
}

pl::RunConfig resolve(const CommonArgs& a) {
  pl::RunConfig cfg;
  if (!a.config.empty()) pl::load_config(a.config, cfg);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    pl::apply_setting(cfg, std::string(volport::detail::trim(std::string_view(kv).substr(0, eq))),
                      std::string(volport::detail::trim(std::string_view(kv).substr(eq + 1))));
  }
  if (!a.out.empty()) cfg.out_dir = a.out;
  return cfg;
}

std::vector<RiskClass> selected_classes(const std::string& name) {
  if (name.empty()) return {RiskClass::aggressive, RiskClass::moderate, RiskClass::conservative};
  const auto c = parse_risk_class(name);
  if (!c) throw UsageError("unknown class '" + name + "' (aggressive, moderate, conservative)");
  return {*c};
}

pl::fs::path panel_path(const pl::RunConfig& cfg) { return cfg.out_dir / "panel.csv"; }
pl::fs::path partition_path(const pl::RunConfig& cfg) { return cfg.out_dir / "partition.csv"; }

int run_ingest(const pl::RunConfig& cfg) {
  const auto panel = pl::ingest(cfg.data_dir);
  pl::write_atomic(panel_path(cfg), pl::panel_csv(panel));
  std::cout << "panel: n = " << panel.assets() << ", T = " << panel.days() << ", " << panel.dates().front().str()
            << " .. " << panel.dates().back().str() << " -> " << panel_path(cfg).string() << "\n";
  return 0;
}

int run_classify(const pl::RunConfig& cfg) {
  const auto panel = pl::read_panel_csv(panel_path(cfg));
  const auto result = pl::classify(panel, cfg);
  std::vector<VolatilityScore> scores;
  for (const auto& a : result.assets) {
    scores.push_back(a.score);
    if (!a.fit.converged)
      std::cerr << "warning: GARCH fit for " << a.score.ticker << " did not converge (" << a.fit.iterations
                << " iterations); using the best point found\n";
  }
  pl::write_atomic(partition_path(cfg), pl::partition_csv(result.partition, scores));
  for (RiskClass c : {RiskClass::aggressive, RiskClass::moderate, RiskClass::conservative}) {
    std::cout << to_string(c) << " (" << result.partition.members(c).size() << "):";
    for (const auto& t : result.partition.members(c)) std::cout << " " << t;
    std::cout << "\n";
  }
  return 0;
}

int run_train(const pl::RunConfig& cfg, const std::string& cls) {
  const auto panel = pl::read_panel_csv(panel_path(cfg));
  const auto partition = pl::read_partition_csv(partition_path(cfg));
  std::vector<TrainedPolicy> all_runs;
  for (RiskClass c : selected_classes(cls)) {
    auto trained = pl::train_class(panel, partition, c, cfg);
    for (std::size_t i = 0; i < trained.runs.size(); ++i) {
      const auto& run = trained.runs[i];
      save_checkpoint(pl::checkpoint_path(cfg.out_dir, c, i), run.spec, run.params);
      pl::write_atomic(cfg.out_dir / (std::string(to_string(c)) + "_seed" + std::to_string(i) + "_train_report.csv"),
                       pl::train_report_csv(run.report.updates));
      std::cout << to_string(c) << " seed " << i << ": " << run.report.updates.size() << " updates in "
                << run.report.wall_seconds << " s\n";
    }
    if (cfg.search_trials > 0)
      std::cout << to_string(c) << " search: learning_rate = " << trained.config.learning_rate
                << ", clip_eps = " << trained.config.clip_eps << ", rollout_length = " << trained.config.rollout_length
                << "\n";
    for (auto& r : trained.runs) all_runs.push_back(std::move(r));
  }
  pl::write_atomic(cfg.out_dir / "train_report.csv", pl::train_report_csv(pl::average_reports(all_runs)));
  return 0;
}

std::string file_stem(const std::string& model) {
  std::string s = model;
  for (char& ch : s)
    if (ch == ' ') ch = '_';
  return s;
}

int run_backtest(const pl::RunConfig& cfg, const std::string& cls) {
  const auto panel = pl::read_panel_csv(panel_path(cfg));
  const auto partition = pl::read_partition_csv(partition_path(cfg));
  for (RiskClass c : selected_classes(cls)) {
    const auto ledgers = pl::evaluate_class(panel, partition, c, cfg);
    for (std::size_t i = 0; i < ledgers.size(); ++i) {
      const std::string stem = file_stem(pl::model_name(c)) + "_seed" + std::to_string(i);
      pl::write_atomic(cfg.out_dir / ("ledger_" + stem + ".csv"), pl::ledger_csv(ledgers[i]));
      pl::write_atomic(cfg.out_dir / ("weights_" + stem + ".csv"), pl::weights_csv(ledgers[i]));
    }
  }
  if (cls.empty())
    for (const auto& b : pl::run_benchmarks(panel, cfg)) {
      pl::write_atomic(cfg.out_dir / ("ledger_" + file_stem(b.name) + ".csv"), pl::ledger_csv(b.ledger));
      pl::write_atomic(cfg.out_dir / ("weights_" + file_stem(b.name) + ".csv"), pl::weights_csv(b.ledger));
    }
  std::cout << "ledgers written to " << cfg.out_dir.string() << "\n";
  return 0;
}

int run_compare(const pl::RunConfig& cfg) {
  const auto panel = pl::read_panel_csv(panel_path(cfg));
  const auto partition = pl::read_partition_csv(partition_path(cfg));
  const auto report = pl::compare(panel, partition, cfg);
  for (const auto& row : report.rows)
    pl::write_atomic(cfg.out_dir / ("cumret_" + file_stem(row.model) + ".csv"), pl::cumret_csv(row));
  const auto table = pl::metrics_csv(report);
  pl::write_atomic(cfg.out_dir / "metrics.csv", table);
  std::cout << table;
  return 0;
}

int run_simulate(const std::string& spec, const pl::fs::path& out, std::size_t days, std::uint64_t seed) {
  const auto panel = simulate_garch_panel(pl::read_asset_specs(spec), days, seed);
  pl::write_simulated(panel, out);
  std::cout << "simulated " << panel.assets() << " tickers x " << panel.days() << " days ("
            << panel.dates().front().str() << " .. " << panel.dates().back().str() << ") -> " << out.string() << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"GARCH-classified PPO portfolio pipeline"};
  app.require_subcommand(1);

  CommonArgs ingest_args, classify_args, train_args, backtest_args, compare_args;
  auto* ingest = app.add_subcommand("ingest", "load ticker CSVs and write the aligned panel cache");
  add_common(ingest, ingest_args);
  std::string data_dir;
  ingest->add_option("--data", data_dir, "directory of <TICKER>.csv files (overrides data_dir)");

  auto* classify = app.add_subcommand("classify", "GARCH-score assets and write the risk partition");
  add_common(classify, classify_args);
  std::optional<std::size_t> k_top, k_bottom;
  classify->add_option("--k-top", k_top, "aggressive class size");
  classify->add_option("--k-bottom", k_bottom, "conservative class size");

  auto* train = app.add_subcommand("train", "train PPO policies for one or all risk classes");
  add_common(train, train_args);
  std::string train_class;
  std::optional<std::size_t> seeds, updates;
  train->add_option("--class", train_class, "aggressive, moderate or conservative (default: all)");
  train->add_option("--seeds", seeds, "independent training runs per class");
  train->add_option("--updates", updates, "PPO updates per run");

  auto* backtest = app.add_subcommand("backtest", "write test-window ledgers for policies and benchmarks");
  add_common(backtest, backtest_args);
  std::string backtest_class;
  std::optional<std::size_t> backtest_reclassify;
  backtest->add_option("--class", backtest_class, "restrict to one class (benchmarks are skipped)");
  backtest->add_option("--reclassify", backtest_reclassify, "re-partition every N test days (0 = fixed)");

  auto* compare = app.add_subcommand("compare", "write metrics.csv and cumulative-return series");
  add_common(compare, compare_args);
  std::optional<std::size_t> compare_reclassify;
  compare->add_option("--reclassify", compare_reclassify, "re-partition every N test days (0 = fixed)");

  auto* simulate = app.add_subcommand("simulate", "write synthetic GARCH price CSVs");
  std::string spec_file, sim_out = "data", sim_config;
  std::size_t sim_days = 3912;
  std::uint64_t sim_seed = 0;
  simulate->add_option("--spec", spec_file, "lines of ticker,omega,alpha,beta,drift[,p0]")->required();
  simulate->add_option("--out", sim_out, "destination directory for <TICKER>.csv files");
  simulate->add_option("--days", sim_days, "number of trading days");
  simulate->add_option("--seed", sim_seed, "simulation seed");
  simulate->add_option("--config", sim_config, "accepted for symmetry; simulation takes no config keys");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (*ingest) {
      auto cfg = resolve(ingest_args);
      if (!data_dir.empty()) cfg.data_dir = data_dir;
      return run_ingest(cfg);
    }
    if (*classify) {
      auto cfg = resolve(classify_args);
      if (k_top) cfg.k_top = *k_top;
      if (k_bottom) cfg.k_bottom = *k_bottom;
      cfg.validate();
      return run_classify(cfg);
    }
    if (*train) {
      auto cfg = resolve(train_args);
      if (seeds) cfg.seeds = *seeds;
      if (updates) cfg.ppo.total_updates = *updates;
      cfg.validate();
      return run_train(cfg, train_class);
    }
    if (*backtest) {
      auto cfg = resolve(backtest_args);
      if (backtest_reclassify) cfg.reclassify_days = *backtest_reclassify;
      cfg.validate();
      return run_backtest(cfg, backtest_class);
    }
    if (*compare) {
      auto cfg = resolve(compare_args);
      if (compare_reclassify) cfg.reclassify_days = *compare_reclassify;
      cfg.validate();
      return run_compare(cfg);
    }
    if (*simulate) return run_simulate(spec_file, sim_out, sim_days, sim_seed);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::numerical);
  }
  return static_cast<int>(ExitCode::usage);
}
