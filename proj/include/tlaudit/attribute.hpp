#pragma once

#include "tlaudit/learners.hpp"
#include "tlaudit/student_apis.hpp"

namespace tlaudit {

struct AttributeAttackConfig {
  Surface surface = Surface::Feature;
  int aux_size = 400;
  int target_size = 400;
  int n_probes = 20;          // verification: fixed comparison identities
  int exemplars_per_probe = 1;
  int head_class_count = 10;  // recognition
  ClassifierKind classifier = ClassifierKind::Logistic;
  int repetitions = 5;        // resampled-aux repetitions
  std::uint64_t seed = 1;
};

struct AttributeReport {
  std::string surface;
  std::string sweep_variable;  // empty when not produced by a sweep
  double sweep_value = 0.0;
  std::vector<double> fold_accuracies;
  std::vector<double> fold_aucs;
  double accuracy = 0.0;  // mean over repetitions
  double auc = 0.0;
  std::uint64_t seed = 0;
};

/// Supervised inference of the sensitive attribute from API responses:
/// a classifier is trained on aux-labeled responses and evaluated on the
/// target set, with aux resampled per repetition. Aux and target never share
/// an identity, and neither overlaps the probe identities.
AttributeReport attribute_attack(const StudentApis& apis, const AttributeAttackConfig& config);

enum class AttributeSweepVariable { AuxSize, ProbeCount, HeadClassCount };

/// One report per swept value, with seeds derived from the base config so the
/// whole table is reproducible.
std::vector<AttributeReport> sweep_attribute_attack(const StudentApis& apis,
                                                    const AttributeAttackConfig& base,
                                                    AttributeSweepVariable variable,
                                                    const std::vector<double>& values);

}  // namespace tlaudit
