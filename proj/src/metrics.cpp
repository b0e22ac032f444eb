#include "tlaudit/metrics.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace tlaudit {

ConfusionMetrics confusion_metrics(const std::vector<int>& predictions,
                                   const std::vector<int>& labels) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("confusion_metrics: predictions and labels differ in length");
  }
  if (predictions.empty()) {
    throw DimensionError("confusion_metrics: empty input");
  }
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i] != 0;
    const bool l = labels[i] != 0;
    if (p && l) ++tp;
    else if (p && !l) ++fp;
    else if (!p && l) ++fn;
    else ++tn;
  }
  ConfusionMetrics m;
  if (tp + fp > 0) m.precision = tp / (tp + fp); else m.degenerate = true;
  if (tp + fn > 0) m.recall = tp / (tp + fn); else m.degenerate = true;
  if (m.precision + m.recall > 0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.degenerate = true;
  }
  m.tpr = m.recall;
  if (fp + tn > 0) m.fpr = fp / (fp + tn); else m.degenerate = true;
  return m;
}

RocResult roc_curve(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("roc_curve: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  double pos = 0, neg = 0;
  for (int l : labels) (l != 0 ? pos : neg) += 1;
  if (pos == 0 || neg == 0) {
    throw SingleClassError("roc_curve: labels contain a single class");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocResult result;
  result.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  double tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    const double s = scores[order[i]];
    std::size_t j = i;
    while (j < n && scores[order[j]] == s) {
      if (labels[order[j]] != 0) ++tp; else ++fp;
      ++j;
    }
    result.points.push_back({fp / neg, tp / pos, s});
    i = j;
  }

  double auc = 0.0;
  for (std::size_t p = 1; p < result.points.size(); ++p) {
    const auto& a = result.points[p - 1];
    const auto& b = result.points[p];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  result.auc = auc;
  return result;
}

double pair_count_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("pair_count_auc: scores and labels differ in length");
  }
  double won = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 0) continue;
    ++pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j]) won += 1.0;
      else if (scores[i] == scores[j]) won += 0.5;
    }
  }
  for (int l : labels) if (l == 0) ++neg;
  if (pos == 0 || neg == 0) {
    throw SingleClassError("pair_count_auc: labels contain a single class");
  }
  return won / (static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<std::vector<int>> kfold_split(int n, int k,
                                          const std::vector<int>* stratify_labels,
                                          std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: k must be at least 2");
  if (k > n) throw ConfigError("kfold_split: k exceeds n");
  if (stratify_labels && static_cast<int>(stratify_labels->size()) != n) {
    throw DimensionError("kfold_split: stratify labels length mismatch");
  }

  Rng rng(derive_seed(seed, 0x6b666f6cULL));  // "kfol"
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));

  if (!stratify_labels) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx);
    int cursor = 0;
    for (int i = 0; i < n; ++i) {
      folds[static_cast<std::size_t>(cursor)].push_back(idx[static_cast<std::size_t>(i)]);
      cursor = (cursor + 1) % k;
    }
  } else {
    // Deal each label bucket round-robin, carrying the fold cursor across
    // buckets so overall fold sizes stay within one of each other.
    std::map<int, std::vector<int>> buckets;
    for (int i = 0; i < n; ++i) buckets[(*stratify_labels)[static_cast<std::size_t>(i)]].push_back(i);
    int cursor = 0;
    for (auto& [label, idx] : buckets) {
      (void)label;
      rng.shuffle(idx);
      for (int i : idx) {
        folds[static_cast<std::size_t>(cursor)].push_back(i);
        cursor = (cursor + 1) % k;
      }
    }
  }

  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

std::string roc_to_csv(const RocResult& roc) {
  std::ostringstream out;
  out << "fpr,tpr,threshold\n";
  for (const auto& p : roc.points) {
    out << format_double(p.fpr) << ',' << format_double(p.tpr) << ','
        << format_double(p.threshold) << '\n';
  }
  return out.str();
}

}  // namespace tlaudit
