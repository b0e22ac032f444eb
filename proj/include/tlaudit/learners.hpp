#pragma once

#include "tlaudit/common.hpp"

#include <variant>

namespace tlaudit {

enum class ClassifierKind { Logistic, LinearSvm, RandomForest, Qda };

std::string classifier_kind_name(ClassifierKind kind);
ClassifierKind classifier_kind_from_name(const std::string& name);

struct LogisticConfig {
  double l2 = 1e-3;
  double tol = 1e-7;     // gradient infinity-norm at convergence
  int max_iter = 5000;
};

struct SvmConfig {
  double l2 = 1e-3;
  int epochs = 2000;
};

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 8;
  int min_leaf = 1;
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct QdaConfig {
  bool empirical_priors = false;  // default: equal priors
  double ridge_scale = 1e-6;      // ridge = ridge_scale * trace(cov) / dim
};

struct ClassifierConfig {
  LogisticConfig logistic;
  SvmConfig svm;
  ForestConfig forest;
  QdaConfig qda;
};

struct LogisticModel {
  Vector weights;
  double bias = 0.0;
  int iterations = 0;
  double final_objective = 0.0;
  double gradient_norm = 0.0;
};

struct SvmModel {
  Vector weights;
  double bias = 0.0;
  int iterations = 0;
  double final_objective = 0.0;
};

struct TreeNode {
  int feature = -1;       // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double positive_fraction = 0.5;
};

struct ForestModel {
  std::vector<std::vector<TreeNode>> trees;
};

struct QdaModel {
  Vector mean0, mean1;
  Matrix chol0, chol1;     // lower Cholesky factors of the ridged covariances
  double log_det0 = 0.0, log_det1 = 0.0;
  double log_prior0 = 0.0, log_prior1 = 0.0;
};

class FittedClassifier {
 public:
  static FittedClassifier fit(ClassifierKind kind, const Matrix& X,
                              const std::vector<int>& y,
                              const ClassifierConfig& config = {});

  /// One score per row; larger means more likely label 1. Logistic and QDA
  /// return a posterior probability, SVM the margin, forest the mean leaf
  /// positive fraction.
  Vector scores(const Matrix& X) const;

  /// Binary predictions at the kind's native decision point (0.5 for
  /// probability scores, 0 for the SVM margin).
  std::vector<int> predict(const Matrix& X) const;

  ClassifierKind kind() const { return kind_; }

  const LogisticModel& logistic() const { return std::get<LogisticModel>(model_); }
  const QdaModel& qda() const { return std::get<QdaModel>(model_); }

 private:
  ClassifierKind kind_ = ClassifierKind::Logistic;
  std::variant<LogisticModel, SvmModel, ForestModel, QdaModel> model_;
};

/// Objective and gradient of the regularized logistic log-likelihood at
/// (weights, bias); exposed for the finite-difference check.
double logistic_objective(const Matrix& X, const std::vector<int>& y, const Vector& weights,
                          double bias, double l2);
void logistic_gradient(const Matrix& X, const std::vector<int>& y, const Vector& weights,
                       double bias, double l2, Vector& grad_w, double& grad_b);

struct PcaModel {
  Vector mean;
  Matrix axes;               // columns are orthonormal principal directions
  Vector explained_variance;
  Vector explained_ratio;
  bool rank_deficient = false;  // fewer nonzero-variance axes than requested
};

PcaModel fit_pca(const Matrix& X, int n_components);
Matrix pca_transform(const PcaModel& model, const Matrix& X);
Matrix pca_inverse_transform(const PcaModel& model, const Matrix& reduced);

struct GmmConfig {
  int n_components = 2;
  int n_restarts = 3;
  double tol = 1e-7;
  int max_iter = 300;
  double ridge_scale = 1e-6;
  std::uint64_t seed = 0;
};

struct GmmModel {
  std::vector<double> weights;       // mixing weights, sum to 1
  std::vector<Vector> means;
  std::vector<Matrix> covariances;   // SPD after ridge regularization
  std::vector<double> loglik_trace;  // per-iteration mean log-likelihood of the winning restart
  double final_loglik = 0.0;
  int iterations = 0;
};

GmmModel fit_gmm(const Matrix& X, const GmmConfig& config);

/// Per-row component posteriors (responsibilities), one column per component.
Matrix gmm_posterior(const GmmModel& model, const Matrix& X);

/// Per-row total log-density under the mixture.
Vector gmm_loglik_rows(const GmmModel& model, const Matrix& X);

}  // namespace tlaudit
