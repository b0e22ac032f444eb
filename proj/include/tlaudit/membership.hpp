#pragma once

#include "tlaudit/learners.hpp"
#include "tlaudit/metrics.hpp"
#include "tlaudit/student_apis.hpp"

namespace tlaudit {

/// Weighted power sum over the per-class sample covariance: diagonal entries
/// count fully, off-diagonal entries are weighted by lambda, every entry
/// enters as |entry|^rho.
struct CovarianceSummaryParams {
  double rho = 1.0;
  double lambda = 1.0;
};

double covariance_summary(const Matrix& rows, const CovarianceSummaryParams& params);

struct DistanceStats {
  double mean = 0, median = 0, variance = 0, mean_abs_dev = 0, median_abs_dev = 0, iqr = 0;
  Vector as_vector() const;
};

/// The six aggregate statistics of a class's pairwise-distance list, in the
/// fixed order (mean, median, variance, MAD, median-AD, IQR). Quantiles use
/// linear interpolation; variance uses denominator n-1.
DistanceStats class_distance_stats(const std::vector<double>& distances);

/// One identity's view of an API surface: observation rows (features or
/// confidence scores) or the within-class pairwise distances. y2 is carried
/// for ROC scoring only; score computations never read it.
struct ClassGroup {
  int y1 = 0;
  int y2 = 0;
  Matrix rows;
  std::vector<double> distances;
};

/// Queries the chosen surface for every target instance and aggregates per
/// identity (true labels by default, or labels assigned by an auxiliary
/// model). Verification queries all m(m-1)/2 within-class pairs. When the
/// defense chain masks top-k confidences, rows are rebuilt with the given
/// counter strategy. Groups left with fewer than two observations are
/// dropped.
std::vector<ClassGroup> collect_class_groups(
    const StudentApis& apis, Surface surface,
    const std::vector<int>* assigned_labels = nullptr,
    TopkCounterStrategy topk_strategy = TopkCounterStrategy::ZerofillC);

struct NearestCentroidLabeler {
  Matrix centroids;
  std::vector<int> labels;

  static NearestCentroidLabeler fit(const Matrix& exemplar_features,
                                    const std::vector<int>& exemplar_labels);
  std::vector<int> assign(const Matrix& features) const;
};

double labeling_accuracy(const std::vector<int>& assigned, const std::vector<int>& truth);

struct ClassFeatureOptions {
  CovarianceSummaryParams params;  // unused by the covariance-vector path
  int pca_feature = 50;
  int pca_recognition = 15;
  // Cap on the PCA columns handed to a supervised classifier: per-label
  // covariance estimates need several class rows per dimension at desk scale.
  // 0 derives the cap from the class count (rows / 8, at least 2).
  int supervised_max_dims = 0;
};

struct ClassFeatures {
  Matrix rows;             // one row per class
  std::vector<int> y1;
  std::vector<int> y2;
  PcaModel pca;            // identity transform for the verification surface
  bool pca_applied = false;
};

/// Feature surface: upper-triangular covariance entries reduced by PCA.
/// Verification surface: the six distance statistics. Recognition surface:
/// upper-triangular confidence covariance reduced by PCA.
ClassFeatures build_class_feature_vectors(const std::vector<ClassGroup>& groups, Surface surface,
                                          const ClassFeatureOptions& options = {});

enum class RankingMethod { SummaryThreshold, GmmPosterior };
enum class ScoreOrientation { MemberHigh, MemberLow };
enum class DistanceStatistic { Mean, Median, Variance, MeanAbsDev, MedianAbsDev, Iqr };

struct AttackReport {
  std::string attack;
  std::string surface;
  std::string mode;  // "ranking" or "supervised"
  std::vector<double> fold_aucs;
  double auc = 0.0;          // mean fold AUC, or the single ranking AUC
  double auc_sd = 0.0;
  double auc_flipped = 0.0;  // ranking mode: AUC under the opposite orientation
  std::string orientation;
  RocResult roc;             // pooled over folds for supervised modes
  ConfusionMetrics best_f1_metrics;
  double best_f1_threshold = 0.0;
  std::uint64_t seed = 0;
  std::string config_snapshot;
};

struct RankingOptions {
  RankingMethod method = RankingMethod::SummaryThreshold;
  CovarianceSummaryParams params;
  DistanceStatistic statistic = DistanceStatistic::Mean;  // verification surface
  ScoreOrientation orientation = ScoreOrientation::MemberLow;
  bool gmm_total_likelihood = false;  // rank by mixture log-density instead of posterior
  int gmm_components_feature = 2;
  int gmm_components_other = 3;
  // Class feature vectors are few and wide (classes x PCA dims), so the
  // mixture fit uses a much heavier ridge than the learner default.
  double gmm_ridge_scale = 1e-2;
  int gmm_restarts = 5;
  ClassFeatureOptions features;
  std::uint64_t seed = 0;
};

/// Baseline per-instance attack. Feature and recognition surfaces train a
/// classifier under instance-level cross-validation; the verification surface
/// ranks raw pair distances directly (auxiliary labels unused).
AttackReport firstcut_attack(const std::vector<ClassGroup>& groups, Surface surface,
                             ClassifierKind kind, int folds, std::uint64_t seed,
                             const ClassifierConfig& config = {});

/// No-auxiliary attack: rank classes by the covariance summary (or a distance
/// statistic), or by the member-component posterior of a mixture fit to the
/// class feature vectors. Reports the AUC of both orientations.
AttackReport class_based_ranking(const std::vector<ClassGroup>& groups, Surface surface,
                                 const RankingOptions& options = {});

/// Auxiliary attack: classifier on class feature vectors under identity-level
/// cross-validation (the fold unit is the class).
AttackReport class_based_supervised(const std::vector<ClassGroup>& groups, Surface surface,
                                    int folds, ClassifierKind kind, std::uint64_t seed,
                                    const ClassFeatureOptions& options = {},
                                    const ClassifierConfig& classifier_config = {});

/// Runtime description of one membership attack, dispatched by family name:
/// "firstcut", "class-ranking-summary", "class-ranking-gmm",
/// "class-supervised".
struct AttackSpec {
  std::string family = "class-ranking-summary";
  Surface surface = Surface::Feature;
  ClassifierKind classifier = ClassifierKind::Qda;
  RankingOptions ranking;
  int folds = 5;
  ClassifierConfig classifier_config;
};

AttackReport run_attack(const std::vector<ClassGroup>& groups, const AttackSpec& spec,
                        std::uint64_t seed);

}  // namespace tlaudit
