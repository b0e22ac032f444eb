#include "tlaudit/membership.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace tlaudit {

double covariance_summary(const Matrix& rows, const CovarianceSummaryParams& params) {
  if (params.rho <= 0) throw ConfigError("covariance_summary: rho must be positive");
  if (params.lambda < 0) throw ConfigError("covariance_summary: lambda must be non-negative");
  const int m = static_cast<int>(rows.rows());
  if (m < 2) throw DimensionError("covariance_summary: need at least two rows");
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Matrix centered = rows.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / (static_cast<double>(m) - 1.0);
  const int d = static_cast<int>(cov.rows());
  double sum = 0.0;
  for (int i = 0; i < d; ++i) {
    sum += std::pow(std::fabs(cov(i, i)), params.rho);
    for (int j = i + 1; j < d; ++j) {
      sum += params.lambda * std::pow(std::fabs(cov(i, j)), params.rho);
    }
  }
  return sum;
}

namespace {

double quantile(std::vector<double> sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

Vector DistanceStats::as_vector() const {
  Vector v(6);
  v << mean, median, variance, mean_abs_dev, median_abs_dev, iqr;
  return v;
}

DistanceStats class_distance_stats(const std::vector<double>& distances) {
  if (distances.empty()) throw DimensionError("class_distance_stats: empty input");
  const std::size_t n = distances.size();

  // All accumulation runs over the sorted list, so the statistics are exactly
  // invariant under permutation of the input.
  std::vector<double> sorted = distances;
  std::sort(sorted.begin(), sorted.end());

  DistanceStats stats;
  stats.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  stats.median = quantile(sorted, 0.5);

  if (n > 1) {
    double ss = 0.0;
    for (double d : sorted) ss += (d - stats.mean) * (d - stats.mean);
    stats.variance = ss / static_cast<double>(n - 1);
  }
  double mad = 0.0;
  for (double d : sorted) mad += std::fabs(d - stats.mean);
  stats.mean_abs_dev = mad / static_cast<double>(n);

  std::vector<double> abs_dev;
  abs_dev.reserve(n);
  for (double d : sorted) abs_dev.push_back(std::fabs(d - stats.median));
  std::sort(abs_dev.begin(), abs_dev.end());
  stats.median_abs_dev = quantile(abs_dev, 0.5);

  stats.iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
  return stats;
}

std::vector<ClassGroup> collect_class_groups(const StudentApis& apis, Surface surface,
                                             const std::vector<int>* assigned_labels,
                                             TopkCounterStrategy topk_strategy) {
  const World& world = apis.world();
  const int n = apis.instance_count();
  if (assigned_labels && static_cast<int>(assigned_labels->size()) != n) {
    throw DimensionError("collect_class_groups: assigned label count mismatch");
  }

  std::map<int, std::vector<int>> by_label;
  for (int i = 0; i < n; ++i) {
    const int label = assigned_labels ? (*assigned_labels)[static_cast<std::size_t>(i)]
                                      : world.instances[static_cast<std::size_t>(i)].y1;
    by_label[label].push_back(i);
  }

  const bool masked = surface == Surface::Recognition && apis.defense().topk().has_value();

  std::vector<ClassGroup> groups;
  for (const auto& [label, idx] : by_label) {
    if (idx.size() < 2) continue;  // aggregate statistics need at least two observations
    ClassGroup group;
    group.y1 = label;
    int members = 0;
    for (int i : idx) members += world.instances[static_cast<std::size_t>(i)].y2;
    group.y2 = 2 * members >= static_cast<int>(idx.size()) ? 1 : 0;

    switch (surface) {
      case Surface::Feature: {
        group.rows.resize(static_cast<Eigen::Index>(idx.size()), world.features.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) {
          group.rows.row(static_cast<Eigen::Index>(r)) = apis.feature(idx[r]);
        }
        break;
      }
      case Surface::Verification: {
        group.distances.reserve(idx.size() * (idx.size() - 1) / 2);
        for (std::size_t a = 0; a < idx.size(); ++a) {
          for (std::size_t b = a + 1; b < idx.size(); ++b) {
            group.distances.push_back(apis.verify(idx[a], idx[b]));
          }
        }
        break;
      }
      case Surface::Recognition: {
        if (masked) {
          std::vector<std::vector<std::pair<int, double>>> responses;
          responses.reserve(idx.size());
          for (int i : idx) responses.push_back(apis.recognition_masked(i));
          const int c = static_cast<int>(apis.recognition_student().head_classes.size());
          group.rows = counter_topk_rows(responses, topk_strategy, c);
        } else {
          const int c = static_cast<int>(apis.recognition_student().head_classes.size());
          group.rows.resize(static_cast<Eigen::Index>(idx.size()), c);
          for (std::size_t r = 0; r < idx.size(); ++r) {
            group.rows.row(static_cast<Eigen::Index>(r)) = apis.recognition(idx[r]);
          }
        }
        break;
      }
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

NearestCentroidLabeler NearestCentroidLabeler::fit(const Matrix& exemplar_features,
                                                   const std::vector<int>& exemplar_labels) {
  if (exemplar_features.rows() == 0) {
    throw DimensionError("NearestCentroidLabeler: empty exemplar set");
  }
  if (static_cast<int>(exemplar_labels.size()) != exemplar_features.rows()) {
    throw DimensionError("NearestCentroidLabeler: label count mismatch");
  }
  std::map<int, std::pair<Vector, int>> sums;
  for (int i = 0; i < exemplar_features.rows(); ++i) {
    auto [it, inserted] = sums.try_emplace(exemplar_labels[static_cast<std::size_t>(i)],
                                           Vector::Zero(exemplar_features.cols()), 0);
    it->second.first += exemplar_features.row(i).transpose();
    it->second.second += 1;
  }
  NearestCentroidLabeler labeler;
  labeler.centroids.resize(static_cast<Eigen::Index>(sums.size()), exemplar_features.cols());
  Eigen::Index row = 0;
  for (const auto& [label, acc] : sums) {
    labeler.centroids.row(row++) = (acc.first / acc.second).transpose();
    labeler.labels.push_back(label);
  }
  return labeler;
}

std::vector<int> NearestCentroidLabeler::assign(const Matrix& features) const {
  if (features.cols() != centroids.cols()) {
    throw DimensionError("NearestCentroidLabeler: feature dimensionality mismatch");
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(features.rows()));
  for (int i = 0; i < features.rows(); ++i) {
    Eigen::Index best = 0;
    (centroids.rowwise() - features.row(i)).rowwise().squaredNorm().minCoeff(&best);
    out.push_back(labels[static_cast<std::size_t>(best)]);
  }
  return out;
}

double labeling_accuracy(const std::vector<int>& assigned, const std::vector<int>& truth) {
  if (assigned.size() != truth.size() || assigned.empty()) {
    throw DimensionError("labeling_accuracy: length mismatch");
  }
  int correct = 0;
  for (std::size_t i = 0; i < assigned.size(); ++i) correct += assigned[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(assigned.size());
}

namespace {

Vector upper_triangular_covariance(const Matrix& rows) {
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Matrix centered = rows.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / (static_cast<double>(rows.rows()) - 1.0);
  const int d = static_cast<int>(cov.rows());
  Vector out(d * (d + 1) / 2);
  int pos = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) out[pos++] = cov(i, j);
  }
  return out;
}

void require_both_memberships(const std::vector<int>& y2, int minimum) {
  int members = 0, nonmembers = 0;
  for (int v : y2) (v != 0 ? members : nonmembers) += 1;
  if (members < minimum || nonmembers < minimum) {
    throw SingleClassError("attack: need at least " + std::to_string(minimum) +
                           " classes per membership status");
  }
}

double statistic_value(const DistanceStats& stats, DistanceStatistic which) {
  switch (which) {
    case DistanceStatistic::Mean: return stats.mean;
    case DistanceStatistic::Median: return stats.median;
    case DistanceStatistic::Variance: return stats.variance;
    case DistanceStatistic::MeanAbsDev: return stats.mean_abs_dev;
    case DistanceStatistic::MedianAbsDev: return stats.median_abs_dev;
    case DistanceStatistic::Iqr: return stats.iqr;
  }
  return stats.mean;
}

std::string statistic_name(DistanceStatistic which) {
  switch (which) {
    case DistanceStatistic::Mean: return "mean";
    case DistanceStatistic::Median: return "median";
    case DistanceStatistic::Variance: return "variance";
    case DistanceStatistic::MeanAbsDev: return "mad";
    case DistanceStatistic::MedianAbsDev: return "median-ad";
    case DistanceStatistic::Iqr: return "iqr";
  }
  return "mean";
}

void fill_best_f1(AttackReport& report, const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double best_f1 = -1.0;
  for (double t : thresholds) {
    std::vector<int> preds(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] >= t ? 1 : 0;
    const ConfusionMetrics m = confusion_metrics(preds, labels);
    if (m.f1 > best_f1) {
      best_f1 = m.f1;
      report.best_f1_metrics = m;
      report.best_f1_threshold = t;
    }
  }
}

// Labels enter only here; score construction above never sees y2.
void score_report(AttackReport& report, const std::vector<double>& scores,
                  const std::vector<int>& labels) {
  report.roc = roc_curve(scores, labels);
  report.auc = report.roc.auc;
  std::vector<double> negated(scores.size());
  std::transform(scores.begin(), scores.end(), negated.begin(), std::negate<>());
  report.auc_flipped = roc_curve(negated, labels).auc;
  fill_best_f1(report, scores, labels);
}

struct InstanceView {
  Matrix rows;
  std::vector<int> labels;
  std::vector<int> group_of;  // class index per row; folds move whole classes
};

InstanceView flatten_groups(const std::vector<ClassGroup>& groups) {
  Eigen::Index total = 0;
  for (const auto& g : groups) total += g.rows.rows();
  if (total == 0) throw DimensionError("attack: no per-instance observations on this surface");
  InstanceView view;
  view.rows.resize(total, groups.front().rows.cols());
  Eigen::Index row = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (Eigen::Index r = 0; r < groups[g].rows.rows(); ++r) {
      view.rows.row(row++) = groups[g].rows.row(r);
      view.labels.push_back(groups[g].y2);
      view.group_of.push_back(static_cast<int>(g));
    }
  }
  return view;
}

// Cross-validated classifier scores: trains on each fold's complement,
// scores the held-out rows, and reports per-fold plus pooled results. When
// group_of is given, folds are built over groups (the identity is the fold
// unit) and rows follow their group.
void cross_validated_report(AttackReport& report, const Matrix& X, const std::vector<int>& y,
                            int folds, ClassifierKind kind, std::uint64_t seed,
                            const ClassifierConfig& config,
                            const std::vector<int>* group_of = nullptr) {
  const int n = static_cast<int>(X.rows());
  std::vector<std::vector<int>> fold_sets;
  if (group_of) {
    const int n_groups = *std::max_element(group_of->begin(), group_of->end()) + 1;
    std::vector<int> group_label(static_cast<std::size_t>(n_groups), 0);
    for (int i = 0; i < n; ++i) {
      group_label[static_cast<std::size_t>((*group_of)[static_cast<std::size_t>(i)])] =
          y[static_cast<std::size_t>(i)];
    }
    const auto group_folds = kfold_split(n_groups, folds, &group_label, seed);
    std::vector<int> fold_of_group(static_cast<std::size_t>(n_groups), 0);
    for (std::size_t f = 0; f < group_folds.size(); ++f) {
      for (int g : group_folds[f]) fold_of_group[static_cast<std::size_t>(g)] = static_cast<int>(f);
    }
    fold_sets.resize(static_cast<std::size_t>(folds));
    for (int i = 0; i < n; ++i) {
      fold_sets[static_cast<std::size_t>(
                    fold_of_group[static_cast<std::size_t>((*group_of)[static_cast<std::size_t>(i)])])]
          .push_back(i);
    }
  } else {
    fold_sets = kfold_split(n, folds, &y, seed);
  }
  std::vector<double> pooled_scores;
  std::vector<int> pooled_labels;
  for (std::size_t f = 0; f < fold_sets.size(); ++f) {
    std::vector<char> held(static_cast<std::size_t>(n), 0);
    for (int i : fold_sets[f]) held[static_cast<std::size_t>(i)] = 1;
    std::vector<int> train_idx;
    for (int i = 0; i < n; ++i) {
      if (!held[static_cast<std::size_t>(i)]) train_idx.push_back(i);
    }
    Matrix train_X(static_cast<Eigen::Index>(train_idx.size()), X.cols());
    std::vector<int> train_y;
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
      train_X.row(static_cast<Eigen::Index>(i)) = X.row(train_idx[i]);
      train_y.push_back(y[static_cast<std::size_t>(train_idx[i])]);
    }
    ClassifierConfig fold_config = config;
    fold_config.forest.seed = derive_seed(seed, 0x666f6c64ULL, f);  // "fold"
    const FittedClassifier model = FittedClassifier::fit(kind, train_X, train_y, fold_config);

    Matrix test_X(static_cast<Eigen::Index>(fold_sets[f].size()), X.cols());
    std::vector<int> test_y;
    for (std::size_t i = 0; i < fold_sets[f].size(); ++i) {
      test_X.row(static_cast<Eigen::Index>(i)) = X.row(fold_sets[f][i]);
      test_y.push_back(y[static_cast<std::size_t>(fold_sets[f][i])]);
    }
    const Vector scores = model.scores(test_X);
    std::vector<double> fold_scores(scores.data(), scores.data() + scores.size());
    report.fold_aucs.push_back(roc_curve(fold_scores, test_y).auc);
    pooled_scores.insert(pooled_scores.end(), fold_scores.begin(), fold_scores.end());
    pooled_labels.insert(pooled_labels.end(), test_y.begin(), test_y.end());
  }
  report.roc = roc_curve(pooled_scores, pooled_labels);
  double mean = 0.0;
  for (double a : report.fold_aucs) mean += a;
  mean /= static_cast<double>(report.fold_aucs.size());
  double var = 0.0;
  for (double a : report.fold_aucs) var += (a - mean) * (a - mean);
  report.auc = mean;
  report.auc_sd = report.fold_aucs.size() > 1
                      ? std::sqrt(var / static_cast<double>(report.fold_aucs.size() - 1))
                      : 0.0;
  fill_best_f1(report, pooled_scores, pooled_labels);
}

}  // namespace

ClassFeatures build_class_feature_vectors(const std::vector<ClassGroup>& groups, Surface surface,
                                          const ClassFeatureOptions& options) {
  if (groups.empty()) throw DimensionError("build_class_feature_vectors: no groups");
  ClassFeatures out;
  for (const auto& g : groups) {
    out.y1.push_back(g.y1);
    out.y2.push_back(g.y2);
  }
  const int n = static_cast<int>(groups.size());

  if (surface == Surface::Verification) {
    out.rows.resize(n, 6);
    for (int i = 0; i < n; ++i) {
      out.rows.row(i) = class_distance_stats(groups[static_cast<std::size_t>(i)].distances)
                            .as_vector()
                            .transpose();
    }
    return out;
  }

  Matrix raw;
  for (int i = 0; i < n; ++i) {
    const Vector tri = upper_triangular_covariance(groups[static_cast<std::size_t>(i)].rows);
    if (i == 0) raw.resize(n, tri.size());
    if (tri.size() != raw.cols()) {
      throw DimensionError("build_class_feature_vectors: inconsistent observation widths");
    }
    raw.row(i) = tri;
  }

  const int target = surface == Surface::Feature ? options.pca_feature : options.pca_recognition;
  const int available = std::min<int>(n - 1, static_cast<int>(raw.cols()));
  const int n_components = std::min(target, available);
  if (n_components < 1) {
    throw DimensionError("build_class_feature_vectors: too few classes for PCA");
  }
  out.pca = fit_pca(raw, n_components);
  out.rows = pca_transform(out.pca, raw);
  out.pca_applied = true;
  return out;
}

AttackReport firstcut_attack(const std::vector<ClassGroup>& groups, Surface surface,
                             ClassifierKind kind, int folds, std::uint64_t seed,
                             const ClassifierConfig& config) {
  AttackReport report;
  report.attack = "firstcut";
  report.surface = surface_name(surface);
  report.seed = seed;

  if (surface == Surface::Verification) {
    // Raw pair distance is the score; small distance indicates a member pair.
    report.mode = "ranking";
    report.orientation = "member_low";
    report.config_snapshot = "score=pair-distance";
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& g : groups) {
      for (double d : g.distances) {
        scores.push_back(-d);
        labels.push_back(g.y2);
      }
    }
    if (scores.empty()) throw DimensionError("firstcut_attack: no pair distances collected");
    score_report(report, scores, labels);
    return report;
  }

  report.mode = "supervised";
  report.config_snapshot = "classifier=" + classifier_kind_name(kind) +
                           ",folds=" + std::to_string(folds);
  const InstanceView view = flatten_groups(groups);
  // Fold unit is the identity: held-out instances belong to classes the
  // attack model never saw, same as the class-based cross-validation.
  cross_validated_report(report, view.rows, view.labels, folds, kind, seed, config,
                         &view.group_of);
  return report;
}

AttackReport class_based_ranking(const std::vector<ClassGroup>& groups, Surface surface,
                                 const RankingOptions& options) {
  AttackReport report;
  report.surface = surface_name(surface);
  report.mode = "ranking";
  report.seed = options.seed;
  report.orientation =
      options.orientation == ScoreOrientation::MemberLow ? "member_low" : "member_high";

  std::vector<int> labels;
  for (const auto& g : groups) labels.push_back(g.y2);
  require_both_memberships(labels, 4);

  std::vector<double> scores(groups.size());
  if (options.method == RankingMethod::SummaryThreshold) {
    report.attack = "class-ranking-summary";
    if (surface == Surface::Verification) {
      report.config_snapshot = "statistic=" + statistic_name(options.statistic);
      for (std::size_t i = 0; i < groups.size(); ++i) {
        scores[i] = statistic_value(class_distance_stats(groups[i].distances), options.statistic);
      }
    } else {
      report.config_snapshot = "rho=" + format_double(options.params.rho) +
                               ",lambda=" + format_double(options.params.lambda);
      for (std::size_t i = 0; i < groups.size(); ++i) {
        scores[i] = covariance_summary(groups[i].rows, options.params);
      }
    }
    if (options.orientation == ScoreOrientation::MemberLow) {
      for (double& s : scores) s = -s;
    }
  } else {
    report.attack = "class-ranking-gmm";
    const ClassFeatures features = build_class_feature_vectors(groups, surface, options.features);
    GmmConfig gmm_config;
    gmm_config.n_components = surface == Surface::Feature ? options.gmm_components_feature
                                                          : options.gmm_components_other;
    gmm_config.ridge_scale = options.gmm_ridge_scale;
    gmm_config.n_restarts = options.gmm_restarts;
    gmm_config.seed = derive_seed(options.seed, 0x676d6d72ULL);  // "gmmr"
    const GmmModel gmm = fit_gmm(features.rows, gmm_config);
    report.config_snapshot = "gmm_components=" + std::to_string(gmm_config.n_components);

    if (options.gmm_total_likelihood) {
      // Orientation-free variant: rank by how typical the class looks under
      // the whole mixture.
      const Vector loglik = gmm_loglik_rows(gmm, features.rows);
      for (std::size_t i = 0; i < groups.size(); ++i) {
        scores[i] = loglik[static_cast<Eigen::Index>(i)];
      }
    } else {
      // Member component: the mixture component whose mean of the first class
      // feature sits on the member side of the chosen orientation.
      std::size_t member_component = 0;
      double extreme = gmm.means[0][0];
      for (std::size_t k = 1; k < gmm.means.size(); ++k) {
        const double v = gmm.means[k][0];
        const bool better = options.orientation == ScoreOrientation::MemberLow ? v < extreme
                                                                               : v > extreme;
        if (better) {
          extreme = v;
          member_component = k;
        }
      }
      const Matrix posterior = gmm_posterior(gmm, features.rows);
      for (std::size_t i = 0; i < groups.size(); ++i) {
        scores[i] = posterior(static_cast<Eigen::Index>(i),
                              static_cast<Eigen::Index>(member_component));
      }
    }
  }

  score_report(report, scores, labels);
  return report;
}

AttackReport class_based_supervised(const std::vector<ClassGroup>& groups, Surface surface,
                                    int folds, ClassifierKind kind, std::uint64_t seed,
                                    const ClassFeatureOptions& options,
                                    const ClassifierConfig& classifier_config) {
  AttackReport report;
  report.attack = "class-supervised";
  report.surface = surface_name(surface);
  report.mode = "supervised";
  report.seed = seed;
  report.config_snapshot = "classifier=" + classifier_kind_name(kind) +
                           ",folds=" + std::to_string(folds);

  const ClassFeatures features = build_class_feature_vectors(groups, surface, options);
  require_both_memberships(features.y2, 4);
  int max_dims = options.supervised_max_dims;
  if (max_dims <= 0) {
    max_dims = std::max(2, static_cast<int>(features.rows.rows()) / 8);
  }
  const int used = std::min<int>(max_dims, static_cast<int>(features.rows.cols()));
  const Matrix inputs = features.rows.leftCols(used);
  cross_validated_report(report, inputs, features.y2, folds, kind, seed, classifier_config);
  return report;
}

AttackReport run_attack(const std::vector<ClassGroup>& groups, const AttackSpec& spec,
                        std::uint64_t seed) {
  if (spec.family == "firstcut") {
    return firstcut_attack(groups, spec.surface, spec.classifier, spec.folds, seed,
                           spec.classifier_config);
  }
  if (spec.family == "class-ranking-summary" || spec.family == "class-ranking-gmm") {
    RankingOptions options = spec.ranking;
    options.method = spec.family == "class-ranking-gmm" ? RankingMethod::GmmPosterior
                                                        : RankingMethod::SummaryThreshold;
    options.seed = seed;
    return class_based_ranking(groups, spec.surface, options);
  }
  if (spec.family == "class-supervised") {
    return class_based_supervised(groups, spec.surface, spec.folds, spec.classifier, seed,
                                  spec.ranking.features, spec.classifier_config);
  }
  throw ConfigError("run_attack: unknown attack family " + spec.family);
}

}  // namespace tlaudit
