#include "tlaudit/defense_eval.hpp"

#include <cmath>
#include <sstream>

namespace tlaudit {

std::vector<DefenseEvalRow> evaluate_defense(const DefenseEvaluation& eval) {
  if (eval.seeds.empty()) throw ConfigError("evaluate_defense: no seeds");

  std::vector<DefenseSpec> rows_spec;
  rows_spec.push_back(DefenseSpec::none());
  rows_spec.insert(rows_spec.end(), eval.defenses.begin(), eval.defenses.end());

  std::vector<DefenseEvalRow> rows;
  rows.reserve(rows_spec.size());
  for (const auto& spec : rows_spec) {
    DefenseEvalRow row;
    row.defense = spec.label();
    row.param = spec.param_label();
    row.attack = eval.attack.family + "/" + surface_name(eval.attack.surface);
    rows.push_back(std::move(row));
  }

  for (std::uint64_t seed : eval.seeds) {
    WorldConfig config = eval.world;
    config.seed = seed;
    const World world = build_world_with_features(config, !eval.use_trained_teacher,
                                                  eval.teacher);

    std::optional<RecognitionStudent> student;
    if (eval.attack.surface == Surface::Recognition) {
      FinetuneConfig head_config;
      head_config.seed = derive_seed(seed, 0x68656164ULL);  // "head"
      student = make_recognition_student(world, eval.head_classes, head_config);
    }

    for (std::size_t r = 0; r < rows_spec.size(); ++r) {
      DefenseSpec spec = rows_spec[r];
      if (spec.kind == DefenseKind::Randomize) {
        spec.seed = derive_seed(seed, 0x64656673ULL, r);  // "defs"
      }
      DefenseChain chain = spec.kind == DefenseKind::None
                               ? DefenseChain()
                               : DefenseChain(std::vector<DefenseSpec>{spec});
      const StudentApis apis = student ? StudentApis(world, *student, std::move(chain))
                                       : StudentApis(world, std::move(chain));
      const auto groups = collect_class_groups(apis, eval.attack.surface, nullptr, eval.counter);
      const AttackReport report = run_attack(groups, eval.attack, seed);
      rows[r].seed_aucs.push_back(report.auc);
    }
  }

  for (auto& row : rows) {
    double mean = 0.0;
    for (double a : row.seed_aucs) mean += a;
    mean /= static_cast<double>(row.seed_aucs.size());
    double var = 0.0;
    for (double a : row.seed_aucs) var += (a - mean) * (a - mean);
    row.auc_mean = mean;
    row.auc_sd = row.seed_aucs.size() > 1
                     ? std::sqrt(var / static_cast<double>(row.seed_aucs.size() - 1))
                     : 0.0;
  }
  return rows;
}

std::string defense_table_csv(const std::vector<DefenseEvalRow>& rows) {
  std::ostringstream out;
  out << "defense,param,attack,auc_mean,auc_sd\n";
  for (const auto& row : rows) {
    out << row.defense << ',' << row.param << ',' << row.attack << ','
        << format_double(row.auc_mean) << ',' << format_double(row.auc_sd) << '\n';
  }
  return out.str();
}

}  // namespace tlaudit
