#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "taxirl/experiment.hpp"

namespace {

void print_summary(const taxirl::SweepReport& report) {
  std::cout << taxirl::format_aggregate_csv(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Taxi repositioning simulator and learners"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  std::vector<taxirl::Minute> patience;
  bool event_log = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "Experiment config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("-o,--out", out_dir, "Output directory (overrides output_dir)");
    cmd->add_option("-s,--seed", seeds, "Seed override (repeatable)");
  };

  auto* run = app.add_subcommand("run", "Run every configured (policy, patience, seed)");
  add_common(run);
  run->add_flag("--event-log", event_log, "Write per-decision event logs");

  auto* sweep = app.add_subcommand("sweep", "Patience sweep with paired seeds");
  add_common(sweep);
  sweep->add_option("-p,--patience", patience, "Patience values in minutes")->delimiter(',');
  sweep->add_flag("--event-log", event_log, "Write per-decision event logs");

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("-c,--config", config_path, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    taxirl::ExperimentConfig cfg = taxirl::load_config(config_path);
    if (!seeds.empty()) cfg.seeds = seeds;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (event_log) cfg.event_log = true;

    if (validate->parsed()) {
      taxirl::Experiment experiment(cfg);
      std::cout << "ok: " << experiment.network().zone_count() << " zones, "
                << cfg.policies.size() << " policies, " << cfg.patience.size()
                << " patience values, " << cfg.seeds.size() << " seeds\n";
      return EXIT_SUCCESS;
    }
    if (cfg.output_dir.empty()) {
      std::cerr << "error: no output directory (set output_dir or pass --out)\n";
      return 2;
    }
    taxirl::SweepReport report = sweep->parsed()
                                     ? taxirl::sweep_patience(cfg, patience.empty() ? cfg.patience : patience)
                                     : taxirl::run_experiment(cfg);
    taxirl::emit_report(report, cfg.output_dir);
    print_summary(report);
    std::cerr << "wrote " << (cfg.output_dir / "runs.csv").string() << " and "
              << (cfg.output_dir / "aggregate.csv").string() << '\n';
  } catch (const taxirl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return EXIT_SUCCESS;
}
