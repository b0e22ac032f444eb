#include "tlaudit/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitStageError = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tlaudit: black-box leakage audit for transfer-learning student APIs"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::int64_t seed_override = -1;
  int jobs = 0;
  bool plots = false;

  auto* gen = app.add_subcommand("gen-world", "generate a world and export its instance CSV");
  std::string gen_out = "world.csv";
  gen->add_option("--config", config_path, "experiment config JSON")->required();
  gen->add_option("--out", gen_out, "output instance CSV path");
  gen->add_option("--seed", seed_override, "override the config seed");

  auto* run = app.add_subcommand("run", "run the configured experiment");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_option("--out-dir", out_dir, "output directory (overrides config)");
  run->add_option("--seed", seed_override, "single seed overriding the config seed list");
  run->add_option("--jobs", jobs, "parallel seed workers");
  run->add_flag("--plots", plots, "emit SVG ROC plots");

  auto* report = app.add_subcommand("report", "re-render CSVs/plots from a run directory");
  report->add_option("--out-dir", out_dir, "run directory")->required();
  report->add_flag("--plots", plots, "emit SVG ROC plots");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      tlaudit::ExperimentConfig config = tlaudit::load_experiment_config(config_path);
      if (seed_override >= 0) config.world.seed = static_cast<std::uint64_t>(seed_override);
      tlaudit::World world;
      switch (config.world_source) {
        case tlaudit::ExperimentConfig::WorldSource::Oracle:
          world = tlaudit::generate_oracle_features(config.world);
          break;
        case tlaudit::ExperimentConfig::WorldSource::Trained:
          world = tlaudit::build_world_with_features(config.world, false, config.teacher);
          break;
        case tlaudit::ExperimentConfig::WorldSource::Import:
          world = tlaudit::import_instances(config.import_path);
          break;
      }
      tlaudit::export_instances(world, gen_out);
      std::cout << "wrote " << gen_out << " (" << world.instances.size() << " instances)\n";
      return kExitOk;
    }
    if (run->parsed()) {
      tlaudit::ExperimentConfig config = tlaudit::load_experiment_config(config_path);
      if (!out_dir.empty()) config.output_dir = out_dir;
      if (seed_override >= 0) config.seeds = {static_cast<std::uint64_t>(seed_override)};
      if (jobs > 0) config.jobs = jobs;
      if (plots) config.plots = true;
      try {
        const tlaudit::ReportBundle bundle = tlaudit::run_experiment(config);
        std::cout << "wrote " << bundle.files_written.size() << " files to " << config.output_dir
                  << "\n";
        return kExitOk;
      } catch (const tlaudit::ConfigError&) {
        throw;
      } catch (const tlaudit::Error& e) {
        std::cerr << "stage error: " << e.what() << "\n";
        return kExitStageError;
      }
    }
    if (report->parsed()) {
      tlaudit::render_report(out_dir, plots);
      return kExitOk;
    }
  } catch (const tlaudit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const tlaudit::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageError;
  }
  return kExitOk;
}
