#pragma once

#include "tlaudit/attribute.hpp"
#include "tlaudit/defense_eval.hpp"
#include "tlaudit/membership.hpp"

#include <filesystem>

namespace tlaudit {

inline constexpr const char* kToolkitVersion = "0.1.0";

struct AttributeAttackEntry {
  AttributeAttackConfig config;
  std::string sweep_variable;        // empty: single run
  std::vector<double> sweep_values;
};

struct ExperimentConfig {
  // Exactly one world source.
  enum class WorldSource { Oracle, Trained, Import };
  WorldSource world_source = WorldSource::Oracle;
  WorldConfig world;
  TeacherConfig teacher;
  std::string import_path;
  int head_classes_from_import = 0;  // carve head identities out of an imported target set

  std::vector<AttackSpec> attacks;
  std::vector<AttributeAttackEntry> attribute_attacks;
  std::vector<DefenseSpec> defenses;  // each combined with every attack, after a baseline
  TopkCounterStrategy counter = TopkCounterStrategy::ZerofillC;

  int folds = 5;
  std::vector<std::uint64_t> seeds = {1};
  int head_classes = 10;
  std::string output_dir = "out";
  bool plots = false;
  int jobs = 1;

  void validate() const;
};

/// Parses the JSON document, reporting unknown or ill-typed fields by name.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

struct SummaryRow {
  std::string attack, surface, mode, defense, param;
  int fold = 0;
  double auc = 0, precision = 0, recall = 0, f1 = 0;
  std::uint64_t seed = 0;
};

struct ReportBundle {
  std::vector<SummaryRow> summary;
  std::vector<std::string> files_written;
  std::string manifest_path;
};

/// Executes every attack/defense combination over every seed, writing
/// summary.csv, per-attack ROC CSVs, optional attribute tables, and a run
/// manifest. Outputs are a pure function of (config, seeds).
ReportBundle run_experiment(const ExperimentConfig& config);

/// Re-renders plots and prints the summary of a finished run directory.
void render_report(const std::string& out_dir, bool plots);

/// Instance CSV schema: `id,class,member,attr,f0,...,f{k-1}`.
void export_instances(const World& world, const std::string& path);
World import_instances(const std::string& path);

std::string summary_to_csv(const std::vector<SummaryRow>& rows);
std::string roc_svg(const RocResult& roc, const std::string& title);

}  // namespace tlaudit
