// Command-line front end: thin argument handling around the bench module.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gapfill/bench.hpp"
#include "gapfill/version.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<std::string> out;
  bool dry_run = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* config = cmd->add_option("--config", args.config, "experiment config (JSON)");
  if (config_required) config->required();
  cmd->add_option("--seed", [&args](const CLI::results_t& r) {
    args.seed = std::stoull(r[0]);
    return true;
  }, "master seed override");
  cmd->add_option("--runs", [&args](const CLI::results_t& r) {
    args.runs = std::stoull(r[0]);
    return true;
  }, "run count override");
  cmd->add_option("--out", [&args](const CLI::results_t& r) {
    args.out = r[0];
    return true;
  }, "output directory override");
  cmd->add_flag("--dry-run", args.dry_run, "validate the config and stop before any work");
}

gapfill::CliOverrides to_overrides(const CommonArgs& args) {
  gapfill::CliOverrides opt;
  opt.seed = args.seed;
  opt.runs = args.runs;
  if (args.out) opt.out = *args.out;
  opt.dry_run = args.dry_run;
  return opt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gapfill: imputation benchmark harness for multichannel wearable time series"};
  app.set_version_flag("--version", gapfill::kVersion);
  app.require_subcommand(1);

  CommonArgs pre, train, bench, down, report;
  auto* cmd_pre = app.add_subcommand("preprocess", "run a dataset pipeline and cache frames/windows");
  add_common(cmd_pre, pre);
  auto* cmd_train = app.add_subcommand("train", "train the imputer or classifier");
  add_common(cmd_train, train);
  auto* cmd_bench = app.add_subcommand("impute-bench", "score imputation strategies per source and gap length");
  add_common(cmd_bench, bench);
  auto* cmd_down = app.add_subcommand("downstream", "classifier accuracy over strategy x missing-rate grid");
  add_common(cmd_down, down);
  auto* cmd_report = app.add_subcommand("report", "render JSON reports in an output directory as text");
  add_common(cmd_report, report, /*config_required=*/false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad arguments are configuration errors
  }

  try {
    if (cmd_report->parsed()) {
      std::filesystem::path dir;
      if (report.out) {
        dir = *report.out;
      } else if (!report.config.empty()) {
        dir = gapfill::load_experiment_config(report.config).out_dir;
      } else {
        throw gapfill::ConfigError("report: pass --out or --config");
      }
      return gapfill::cmd_report(dir, std::cout);
    }

    const CommonArgs& args = cmd_pre->parsed()     ? pre
                             : cmd_train->parsed() ? train
                             : cmd_bench->parsed() ? bench
                                                   : down;
    gapfill::ExperimentConfig cfg = gapfill::load_experiment_config(args.config);
    const gapfill::CliOverrides opt = to_overrides(args);
    if (cmd_pre->parsed()) return gapfill::cmd_preprocess(std::move(cfg), opt, std::cout);
    if (cmd_train->parsed()) return gapfill::cmd_train(std::move(cfg), opt, std::cout);
    if (cmd_bench->parsed()) return gapfill::cmd_impute_bench(std::move(cfg), opt, std::cout);
    return gapfill::cmd_downstream(std::move(cfg), opt, std::cout);
  } catch (const gapfill::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
