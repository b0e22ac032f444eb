#pragma once

#include "tlaudit/membership.hpp"

namespace tlaudit {

struct DefenseEvalRow {
  std::string defense;
  std::string param;
  std::string attack;
  double auc_mean = 0.0;
  double auc_sd = 0.0;
  std::vector<double> seed_aucs;
};

struct DefenseEvaluation {
  WorldConfig world;
  bool use_trained_teacher = false;
  TeacherConfig teacher;
  int head_classes = 10;  // recognition student width when the surface needs one
  AttackSpec attack;
  std::vector<DefenseSpec> defenses;  // one table row each; a baseline row is prepended
  std::vector<std::uint64_t> seeds;
  TopkCounterStrategy counter = TopkCounterStrategy::ZerofillC;
};

/// Reruns the attack through the filtered APIs once per defense row and seed.
/// Row 0 is always the undefended baseline.
std::vector<DefenseEvalRow> evaluate_defense(const DefenseEvaluation& eval);

/// `defense,param,attack,auc_mean,auc_sd` rows.
std::string defense_table_csv(const std::vector<DefenseEvalRow>& rows);

}  // namespace tlaudit
