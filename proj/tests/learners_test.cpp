#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tlaudit/learners.hpp"
#include "tlaudit/metrics.hpp"

#include <cmath>

using namespace tlaudit;

namespace {

// Two Gaussian blobs around +/-(2, 0); linearly separable when spread is small.
void make_blobs(int n_per_class, double spread, std::uint64_t seed, Matrix& X,
                std::vector<int>& y) {
  Rng rng(seed);
  X.resize(2 * n_per_class, 2);
  y.clear();
  for (int i = 0; i < 2 * n_per_class; ++i) {
    const int label = i < n_per_class ? 0 : 1;
    const double cx = label == 0 ? -2.0 : 2.0;
    X(i, 0) = cx + spread * rng.normal();
    X(i, 1) = spread * rng.normal();
    y.push_back(label);
  }
}

}  // namespace

TEST_CASE("logistic regression separates linearly separable data") {
  Matrix X;
  std::vector<int> y;
  make_blobs(50, 0.3, 42, X, y);
  const auto model = FittedClassifier::fit(ClassifierKind::Logistic, X, y);
  const auto preds = model.predict(X);
  int correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == y[i];
  CHECK(correct == static_cast<int>(y.size()));
  CHECK(model.logistic().gradient_norm < 1e-5);
}

TEST_CASE("logistic gradient matches central finite differences") {
  Rng rng(7);
  Matrix X(30, 4);
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 4; ++j) X(i, j) = rng.normal();
    y.push_back(i % 2);
  }
  Vector w = rng.normal_vector(4);
  const double b = rng.normal();
  const double l2 = 0.01;
  Vector grad_w(4);
  double grad_b = 0.0;
  logistic_gradient(X, y, w, b, l2, grad_w, grad_b);
  const double h = 1e-6;
  for (int j = 0; j < 4; ++j) {
    Vector wp = w, wm = w;
    wp[j] += h;
    wm[j] -= h;
    const double fd = (logistic_objective(X, y, wp, b, l2) -
                       logistic_objective(X, y, wm, b, l2)) / (2 * h);
    CHECK(std::fabs(fd - grad_w[j]) / std::max(1e-8, std::fabs(fd)) < 1e-5);
  }
  const double fd_b = (logistic_objective(X, y, w, b + h, l2) -
                       logistic_objective(X, y, w, b - h, l2)) / (2 * h);
  CHECK(std::fabs(fd_b - grad_b) / std::max(1e-8, std::fabs(fd_b)) < 1e-5);
}

TEST_CASE("zero-weight logistic scores one half everywhere") {
  // Heavy regularization on balanced symmetric data pins the weights at zero.
  Matrix X;
  std::vector<int> y;
  make_blobs(10, 0.3, 1, X, y);
  ClassifierConfig config;
  config.logistic.l2 = 1e6;
  const auto fitted = FittedClassifier::fit(ClassifierKind::Logistic, X, y, config);
  const Vector scores = fitted.scores(X);
  for (int i = 0; i < scores.size(); ++i) CHECK(scores[i] == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("single-class labels are rejected by every classifier kind") {
  Matrix X(4, 2);
  X.setZero();
  const std::vector<int> y{1, 1, 1, 1};
  for (auto kind : {ClassifierKind::Logistic, ClassifierKind::LinearSvm,
                    ClassifierKind::RandomForest, ClassifierKind::Qda}) {
    CHECK_THROWS_AS(FittedClassifier::fit(kind, X, y), SingleClassError);
  }
}

TEST_CASE("non-finite inputs are rejected") {
  Matrix X(4, 1);
  X << 0.0, 1.0, std::numeric_limits<double>::quiet_NaN(), 2.0;
  CHECK_THROWS_AS(FittedClassifier::fit(ClassifierKind::Logistic, X, {0, 1, 0, 1}),
                  NonFiniteError);
}

TEST_CASE("linear svm separates blobs") {
  Matrix X;
  std::vector<int> y;
  make_blobs(40, 0.3, 21, X, y);
  const auto model = FittedClassifier::fit(ClassifierKind::LinearSvm, X, y);
  const auto preds = model.predict(X);
  int correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == y[i];
  CHECK(static_cast<double>(correct) / static_cast<double>(y.size()) >= 0.99);
}

TEST_CASE("qda approaches the analytic bayes boundary on two known gaussians") {
  // Means +/-(2,0) with identity covariance: the Bayes rule is sign(x0).
  Rng rng(2024);
  const int n = 500;
  Matrix X(2 * n, 2);
  std::vector<int> y;
  for (int i = 0; i < 2 * n; ++i) {
    const int label = i < n ? 0 : 1;
    const double cx = label == 0 ? -2.0 : 2.0;
    X(i, 0) = cx + rng.normal();
    X(i, 1) = rng.normal();
    y.push_back(label);
  }
  const auto model = FittedClassifier::fit(ClassifierKind::Qda, X, y);
  // Evaluate against the analytic boundary on a fresh grid of draws.
  int agree = 0;
  const auto preds = model.predict(X);
  for (int i = 0; i < 2 * n; ++i) {
    const int bayes = X(i, 0) > 0.0 ? 1 : 0;
    agree += preds[static_cast<std::size_t>(i)] == bayes;
  }
  CHECK(static_cast<double>(agree) / (2.0 * n) >= 0.95);
}

TEST_CASE("qda scores order by density: training mean of label 1 beats label 0 mean") {
  Matrix X;
  std::vector<int> y;
  make_blobs(50, 0.5, 77, X, y);
  const auto model = FittedClassifier::fit(ClassifierKind::Qda, X, y);
  Matrix probes(2, 2);
  probes << 2.0, 0.0,  // label-1 mean
      -2.0, 0.0;       // label-0 mean
  const Vector scores = model.scores(probes);
  CHECK(scores[0] > scores[1]);
  CHECK(scores[0] > 0.99);
  CHECK(scores[1] < 0.01);
}

TEST_CASE("depth-zero single tree scores the exact positive fraction") {
  Matrix X(4, 2);
  X << 0, 0, 1, 0, 0, 1, 1, 1;
  const std::vector<int> y{1, 1, 1, 0};
  ClassifierConfig config;
  config.forest.n_trees = 1;
  config.forest.max_depth = 0;
  config.forest.bootstrap = false;
  const auto model = FittedClassifier::fit(ClassifierKind::RandomForest, X, y, config);
  const Vector scores = model.scores(X);
  for (int i = 0; i < scores.size(); ++i) CHECK(scores[i] == doctest::Approx(0.75));
}

TEST_CASE("random forest fits separable blobs") {
  Matrix X;
  std::vector<int> y;
  make_blobs(40, 0.3, 5, X, y);
  ClassifierConfig config;
  config.forest.n_trees = 30;
  config.forest.seed = 9;
  const auto model = FittedClassifier::fit(ClassifierKind::RandomForest, X, y, config);
  const auto preds = model.predict(X);
  int correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == y[i];
  CHECK(static_cast<double>(correct) / static_cast<double>(y.size()) >= 0.95);
}

TEST_CASE("forest scores are reproducible given the seed") {
  Matrix X;
  std::vector<int> y;
  make_blobs(30, 0.5, 13, X, y);
  ClassifierConfig config;
  config.forest.n_trees = 10;
  config.forest.seed = 123;
  const auto a = FittedClassifier::fit(ClassifierKind::RandomForest, X, y, config).scores(X);
  const auto b = FittedClassifier::fit(ClassifierKind::RandomForest, X, y, config).scores(X);
  CHECK((a - b).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("pca on a 1-D line captures all variance in the first component") {
  Matrix X(10, 3);
  for (int i = 0; i < 10; ++i) {
    const double t = static_cast<double>(i);
    X(i, 0) = t;
    X(i, 1) = 2.0 * t;
    X(i, 2) = -t;
  }
  const auto model = fit_pca(X, 1);
  CHECK(model.explained_ratio[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pca reconstruction with all components is exact") {
  Rng rng(31);
  Matrix X(12, 5);
  for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  const auto model = fit_pca(X, 5);
  const Matrix reconstructed = pca_inverse_transform(model, pca_transform(model, X));
  CHECK((reconstructed - X).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("pca axes of the rotated square lie on the diagonals with equal ratios") {
  Matrix X(4, 2);
  // Unit square rotated 45 degrees: vertices on the axes.
  X << 1, 0, -1, 0, 0, 1, 0, -1;
  const auto model = fit_pca(X, 2);
  CHECK(model.explained_ratio[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(model.explained_ratio[1] == doctest::Approx(0.5).epsilon(1e-12));
  // Axes are the coordinate directions (the square's diagonals).
  for (int c = 0; c < 2; ++c) {
    const double a0 = std::fabs(model.axes(0, c));
    const double a1 = std::fabs(model.axes(1, c));
    CHECK(std::max(a0, a1) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::min(a0, a1) == doctest::Approx(0.0).epsilon(1e-9));
  }
}

TEST_CASE("pca axes are orthonormal") {
  Rng rng(3);
  Matrix X(40, 8);
  for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  const auto model = fit_pca(X, 6);
  const Matrix gram = model.axes.transpose() * model.axes;
  CHECK((gram - Matrix::Identity(6, 6)).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("pca flags rank deficiency and drops zero-variance axes") {
  Matrix X(6, 3);
  for (int i = 0; i < 6; ++i) {
    X(i, 0) = static_cast<double>(i);
    X(i, 1) = 2.0 * static_cast<double>(i);
    X(i, 2) = 3.0 * static_cast<double>(i);
  }
  const auto model = fit_pca(X, 3);
  CHECK(model.rank_deficient);
  CHECK(model.axes.cols() == 1);
}

TEST_CASE("pca rejects out-of-range component counts") {
  Matrix X(4, 3);
  X.setRandom();
  CHECK_THROWS_AS(fit_pca(X, 4), ConfigError);
  CHECK_THROWS_AS(fit_pca(X, 0), ConfigError);
}

TEST_CASE("gmm recovers two well-separated 1-D clusters") {
  Rng rng(55);
  Matrix X(80, 1);
  for (int i = 0; i < 80; ++i) X(i, 0) = (i < 40 ? 0.0 : 100.0) + rng.normal();
  GmmConfig config;
  config.n_components = 2;
  config.seed = 4;
  const auto model = fit_gmm(X, config);
  std::vector<double> means{model.means[0][0], model.means[1][0]};
  std::sort(means.begin(), means.end());
  CHECK(means[0] == doctest::Approx(0.0).epsilon(1.0));
  CHECK(std::fabs(means[0]) < 1.0);
  CHECK(std::fabs(means[1] - 100.0) < 1.0);
}

TEST_CASE("one-component gmm matches the sample statistics") {
  Rng rng(8);
  Matrix X(50, 2);
  for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal() * 2.0 + 1.0;
  GmmConfig config;
  config.n_components = 1;
  config.n_restarts = 1;
  config.ridge_scale = 0.0;
  const auto model = fit_gmm(X, config);
  const Vector mean = X.colwise().mean();
  CHECK((model.means[0] - mean).lpNorm<Eigen::Infinity>() < 1e-9);
  // EM with one component fixes the covariance at the maximum-likelihood
  // estimate: the mean-centered second moment with denominator n.
  const Matrix centered = X.rowwise() - mean.transpose();
  const Matrix mle_cov = centered.transpose() * centered / static_cast<double>(X.rows());
  CHECK((model.covariances[0] - mle_cov).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("gmm log-likelihood trace never decreases") {
  Rng rng(91);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix X(40, 3);
    for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
    GmmConfig config;
    config.n_components = 2;
    config.seed = static_cast<std::uint64_t>(trial);
    const auto model = fit_gmm(X, config);
    for (std::size_t t = 1; t < model.loglik_trace.size(); ++t) {
      CHECK(model.loglik_trace[t] - model.loglik_trace[t - 1] >= -1e-9);
    }
  }
}

TEST_CASE("gmm posteriors sum to one per row") {
  Rng rng(12);
  Matrix X(30, 2);
  for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
  GmmConfig config;
  config.n_components = 3;
  config.seed = 2;
  const auto model = fit_gmm(X, config);
  const Matrix resp = gmm_posterior(model, X);
  for (int i = 0; i < resp.rows(); ++i) {
    CHECK(resp.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
  double weight_sum = 0.0;
  for (double w : model.weights) weight_sum += w;
  CHECK(weight_sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gmm requires more rows than components") {
  Matrix X(2, 1);
  X << 0.0, 1.0;
  GmmConfig config;
  config.n_components = 2;
  CHECK_THROWS_AS(fit_gmm(X, config), DimensionError);
}

TEST_CASE("closed-form fits are invariant under training-row permutation") {
  Rng rng(321);
  Matrix X(40, 3);
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = rng.normal() + (i % 2 == 0 ? 1.0 : -1.0);
    y.push_back(i % 2);
  }
  std::vector<int> order(40);
  for (int i = 0; i < 40; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  Matrix Xp(40, 3);
  std::vector<int> yp;
  for (int i = 0; i < 40; ++i) {
    Xp.row(i) = X.row(order[static_cast<std::size_t>(i)]);
    yp.push_back(y[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
  }

  Matrix probes(5, 3);
  for (int i = 0; i < probes.size(); ++i) probes.data()[i] = rng.normal();

  const Vector qda_a = FittedClassifier::fit(ClassifierKind::Qda, X, y).scores(probes);
  const Vector qda_b = FittedClassifier::fit(ClassifierKind::Qda, Xp, yp).scores(probes);
  CHECK((qda_a - qda_b).lpNorm<Eigen::Infinity>() < 1e-12);

  const Matrix pca_a = pca_transform(fit_pca(X, 2), probes);
  const Matrix pca_b = pca_transform(fit_pca(Xp, 2), probes);
  CHECK((pca_a - pca_b).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("qda without regularization rejects singular covariances") {
  // Two identical columns make the per-label covariance exactly singular.
  Matrix X(20, 2);
  std::vector<int> y;
  Rng rng(77);
  for (int i = 0; i < 20; ++i) {
    const double v = rng.normal();
    X(i, 0) = v;
    X(i, 1) = v;
    y.push_back(i % 2);
  }
  ClassifierConfig config;
  config.qda.ridge_scale = 0.0;
  CHECK_THROWS_AS(FittedClassifier::fit(ClassifierKind::Qda, X, y, config),
                  SingularCovarianceError);
  // The default ridge keeps the same data fittable.
  CHECK_NOTHROW(FittedClassifier::fit(ClassifierKind::Qda, X, y));
}
