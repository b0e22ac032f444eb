#pragma once

#include "tlaudit/common.hpp"

namespace tlaudit {

struct ConfusionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  // Set when some denominator was zero; the affected metrics are reported as 0
  // so fold aggregation stays total.
  bool degenerate = false;
};

ConfusionMetrics confusion_metrics(const std::vector<int>& predictions,
                                   const std::vector<int>& labels);

struct RocPoint {
  double fpr;
  double tpr;
  double threshold;
};

struct RocResult {
  std::vector<RocPoint> points;  // starts at (0,0), ends at (1,1), both monotone
  double auc = 0.0;
};

/// ROC by sweeping every distinct score as a threshold (predict positive when
/// score >= threshold). Tied scores collapse into one sweep step, so the curve
/// walks a diagonal through ties and the trapezoid AUC gives them half credit.
RocResult roc_curve(const std::vector<double>& scores, const std::vector<int>& labels);

/// Mann-Whitney AUC by brute-force pair counting (ties count 1/2). Independent
/// of the sweep construction above; kept as the second route for checking it.
double pair_count_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Partition [0,n) into k folds whose sizes differ by at most one. When
/// stratify_labels is given, per-label counts across folds also differ by at
/// most one. Deterministic given seed.
std::vector<std::vector<int>> kfold_split(int n, int k,
                                          const std::vector<int>* stratify_labels,
                                          std::uint64_t seed);

std::string roc_to_csv(const RocResult& roc);

}  // namespace tlaudit
