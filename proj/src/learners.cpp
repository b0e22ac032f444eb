#include "tlaudit/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tlaudit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_binary_labels(const Matrix& X, const std::vector<int>& y) {
  if (X.rows() == 0) throw DimensionError("fit: empty design matrix");
  if (static_cast<int>(y.size()) != X.rows()) {
    throw DimensionError("fit: label count does not match row count");
  }
  require_finite(X, "fit");
  bool has0 = false, has1 = false;
  for (int v : y) (v != 0 ? has1 : has0) = true;
  if (!has0 || !has1) throw SingleClassError("fit: labels contain a single class");
}

double stable_log_sigmoid(double z) {
  // log(1 / (1 + e^-z))
  if (z >= 0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

LogisticModel fit_logistic(const Matrix& X, const std::vector<int>& y,
                           const LogisticConfig& cfg) {
  const int d = static_cast<int>(X.cols());
  const int n = static_cast<int>(X.rows());
  Vector w = Vector::Zero(d);
  double b = 0.0;

  Vector grad_w(d);
  double grad_b = 0.0;
  double obj = logistic_objective(X, y, w, b, cfg.l2);
  double step = 1.0;
  int iter = 0;
  double gnorm = 0.0;
  for (; iter < cfg.max_iter; ++iter) {
    logistic_gradient(X, y, w, b, cfg.l2, grad_w, grad_b);
    gnorm = std::max(grad_w.lpNorm<Eigen::Infinity>(), std::fabs(grad_b));
    if (gnorm < cfg.tol) break;
    const double g2 = grad_w.squaredNorm() + grad_b * grad_b;
    // Backtracking ascent with a mild Armijo condition.
    step = std::min(step * 2.0, 64.0);
    while (true) {
      Vector w_try = w + step * grad_w;
      double b_try = b + step * grad_b;
      double obj_try = logistic_objective(X, y, w_try, b_try, cfg.l2);
      if (obj_try >= obj + 1e-4 * step * g2 || step < 1e-12) {
        w = std::move(w_try);
        b = b_try;
        obj = obj_try;
        break;
      }
      step *= 0.5;
    }
  }
  (void)n;
  LogisticModel model;
  model.weights = std::move(w);
  model.bias = b;
  model.iterations = iter;
  model.final_objective = obj;
  model.gradient_norm = gnorm;
  return model;
}

SvmModel fit_svm(const Matrix& X, const std::vector<int>& y, const SvmConfig& cfg) {
  const int d = static_cast<int>(X.cols());
  const int n = static_cast<int>(X.rows());
  Vector w = Vector::Zero(d);
  double b = 0.0;
  for (int t = 0; t < cfg.epochs; ++t) {
    const double lr = 1.0 / (cfg.l2 * (static_cast<double>(t) + 1.0));
    Vector sub_w = cfg.l2 * w;
    double sub_b = 0.0;
    for (int i = 0; i < n; ++i) {
      const double sign = y[static_cast<std::size_t>(i)] != 0 ? 1.0 : -1.0;
      const double margin = sign * (X.row(i).dot(w) + b);
      if (margin < 1.0) {
        sub_w -= (sign / n) * X.row(i).transpose();
        sub_b -= sign / n;
      }
    }
    w -= lr * sub_w;
    b -= lr * sub_b;
  }
  double hinge = 0.0;
  for (int i = 0; i < n; ++i) {
    const double sign = y[static_cast<std::size_t>(i)] != 0 ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - sign * (X.row(i).dot(w) + b));
  }
  SvmModel model;
  model.weights = std::move(w);
  model.bias = b;
  model.iterations = cfg.epochs;
  model.final_objective = hinge / n + 0.5 * cfg.l2 * model.weights.squaredNorm();
  return model;
}

double gini(double n_pos, double n_total) {
  if (n_total <= 0) return 0.0;
  const double p = n_pos / n_total;
  return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

struct TreeBuilder {
  const Matrix& X;
  const std::vector<int>& y;
  const ForestConfig& cfg;
  int mtry;
  Rng rng;
  std::vector<TreeNode> nodes;

  int build(std::vector<int>& idx, int depth) {
    double n_pos = 0;
    for (int i : idx) n_pos += y[static_cast<std::size_t>(i)] != 0 ? 1 : 0;
    const double n_total = static_cast<double>(idx.size());

    TreeNode node;
    node.positive_fraction = n_total > 0 ? n_pos / n_total : 0.5;

    const bool pure = n_pos == 0 || n_pos == n_total;
    if (depth >= cfg.max_depth || pure ||
        static_cast<int>(idx.size()) < 2 * cfg.min_leaf) {
      nodes.push_back(node);
      return static_cast<int>(nodes.size()) - 1;
    }

    std::vector<int> features(static_cast<std::size_t>(X.cols()));
    std::iota(features.begin(), features.end(), 0);
    rng.shuffle(features);
    features.resize(static_cast<std::size_t>(std::min<int>(mtry, static_cast<int>(X.cols()))));

    double best_impurity = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;

    std::vector<std::pair<double, int>> values;
    for (int f : features) {
      values.clear();
      for (int i : idx) values.emplace_back(X(i, f), y[static_cast<std::size_t>(i)] != 0 ? 1 : 0);
      std::sort(values.begin(), values.end());
      double left_pos = 0, left_n = 0;
      for (std::size_t v = 0; v + 1 < values.size(); ++v) {
        left_pos += values[v].second;
        left_n += 1;
        if (values[v].first == values[v + 1].first) continue;
        const double right_n = n_total - left_n;
        if (left_n < cfg.min_leaf || right_n < cfg.min_leaf) continue;
        const double impurity = (left_n * gini(left_pos, left_n) +
                                 right_n * gini(n_pos - left_pos, right_n)) / n_total;
        if (impurity < best_impurity) {
          best_impurity = impurity;
          best_feature = f;
          best_threshold = (values[v].first + values[v + 1].first) / 2.0;
        }
      }
    }

    if (best_feature < 0 || best_impurity >= gini(n_pos, n_total)) {
      nodes.push_back(node);
      return static_cast<int>(nodes.size()) - 1;
    }

    std::vector<int> left_idx, right_idx;
    for (int i : idx) {
      (X(i, best_feature) <= best_threshold ? left_idx : right_idx).push_back(i);
    }

    node.feature = best_feature;
    node.threshold = best_threshold;
    nodes.push_back(node);
    const int self = static_cast<int>(nodes.size()) - 1;
    nodes[static_cast<std::size_t>(self)].left = build(left_idx, depth + 1);
    nodes[static_cast<std::size_t>(self)].right = build(right_idx, depth + 1);
    return self;
  }
};

ForestModel fit_forest(const Matrix& X, const std::vector<int>& y, const ForestConfig& cfg) {
  const int n = static_cast<int>(X.rows());
  const int mtry = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(X.cols())))));
  ForestModel model;
  model.trees.reserve(static_cast<std::size_t>(cfg.n_trees));
  for (int t = 0; t < cfg.n_trees; ++t) {
    Rng sampler(derive_seed(cfg.seed, 0x74726565ULL, static_cast<std::uint64_t>(t)));  // "tree"
    std::vector<int> idx(static_cast<std::size_t>(n));
    if (cfg.bootstrap) {
      for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = static_cast<int>(sampler.uniform_int(n));
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    TreeBuilder builder{X, y, cfg, mtry,
                        Rng(derive_seed(cfg.seed, 0x73706c74ULL, static_cast<std::uint64_t>(t))),  // "splt"
                        {}};
    builder.build(idx, 0);
    model.trees.push_back(std::move(builder.nodes));
  }
  return model;
}

double tree_score(const std::vector<TreeNode>& nodes, const Eigen::RowVectorXd& x) {
  int cur = 0;
  while (nodes[static_cast<std::size_t>(cur)].feature >= 0) {
    const auto& node = nodes[static_cast<std::size_t>(cur)];
    cur = x[node.feature] <= node.threshold ? node.left : node.right;
  }
  return nodes[static_cast<std::size_t>(cur)].positive_fraction;
}

Matrix sample_covariance(const Matrix& rows) {
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Matrix centered = rows.rowwise() - mean;
  return centered.transpose() * centered / (static_cast<double>(rows.rows()) - 1.0);
}

Matrix ridged(const Matrix& cov, double ridge_scale) {
  if (ridge_scale <= 0) return cov;
  const double ridge = std::max(ridge_scale * cov.trace() / static_cast<double>(cov.rows()), 1e-12);
  return cov + ridge * Matrix::Identity(cov.rows(), cov.cols());
}

QdaModel fit_qda(const Matrix& X, const std::vector<int>& y, const QdaConfig& cfg) {
  std::vector<int> idx0, idx1;
  for (int i = 0; i < static_cast<int>(y.size()); ++i) {
    (y[static_cast<std::size_t>(i)] != 0 ? idx1 : idx0).push_back(i);
  }
  if (idx0.size() < 2 || idx1.size() < 2) {
    throw SingleClassError("qda: each label needs at least two samples");
  }
  auto gather = [&](const std::vector<int>& idx) {
    Matrix rows(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    return rows;
  };
  const Matrix rows0 = gather(idx0);
  const Matrix rows1 = gather(idx1);

  QdaModel model;
  model.mean0 = rows0.colwise().mean();
  model.mean1 = rows1.colwise().mean();

  auto factor = [&](const Matrix& rows, Matrix& chol, double& log_det) {
    const Matrix cov = ridged(sample_covariance(rows), cfg.ridge_scale);
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() != Eigen::Success) {
      throw SingularCovarianceError("qda: covariance not positive definite");
    }
    chol = llt.matrixL();
    log_det = 0.0;
    for (Eigen::Index i = 0; i < chol.rows(); ++i) log_det += 2.0 * std::log(chol(i, i));
  };
  factor(rows0, model.chol0, model.log_det0);
  factor(rows1, model.chol1, model.log_det1);

  if (cfg.empirical_priors) {
    const double n = static_cast<double>(y.size());
    model.log_prior0 = std::log(static_cast<double>(idx0.size()) / n);
    model.log_prior1 = std::log(static_cast<double>(idx1.size()) / n);
  } else {
    model.log_prior0 = model.log_prior1 = std::log(0.5);
  }
  return model;
}

double gaussian_log_density(const Vector& x, const Vector& mean, const Matrix& chol,
                            double log_det) {
  const Vector diff = x - mean;
  const Vector z = chol.triangularView<Eigen::Lower>().solve(diff);
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + log_det + z.squaredNorm());
}

}  // namespace

std::string classifier_kind_name(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::Logistic: return "logistic";
    case ClassifierKind::LinearSvm: return "linear-svm";
    case ClassifierKind::RandomForest: return "random-forest";
    case ClassifierKind::Qda: return "qda";
  }
  return "unknown";
}

ClassifierKind classifier_kind_from_name(const std::string& name) {
  if (name == "logistic" || name == "lm") return ClassifierKind::Logistic;
  if (name == "linear-svm" || name == "svm") return ClassifierKind::LinearSvm;
  if (name == "random-forest" || name == "rf") return ClassifierKind::RandomForest;
  if (name == "qda") return ClassifierKind::Qda;
  throw ConfigError("unknown classifier kind: " + name);
}

double logistic_objective(const Matrix& X, const std::vector<int>& y, const Vector& weights,
                          double bias, double l2) {
  const int n = static_cast<int>(X.rows());
  const Vector z = X * weights + Vector::Constant(n, bias);
  double loglik = 0.0;
  for (int i = 0; i < n; ++i) {
    loglik += y[static_cast<std::size_t>(i)] != 0 ? stable_log_sigmoid(z[i])
                                                  : stable_log_sigmoid(-z[i]);
  }
  return loglik / n - 0.5 * l2 * weights.squaredNorm();
}

void logistic_gradient(const Matrix& X, const std::vector<int>& y, const Vector& weights,
                       double bias, double l2, Vector& grad_w, double& grad_b) {
  const int n = static_cast<int>(X.rows());
  const Vector z = X * weights + Vector::Constant(n, bias);
  Vector residual(n);
  for (int i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    residual[i] = (y[static_cast<std::size_t>(i)] != 0 ? 1.0 : 0.0) - p;
  }
  grad_w = X.transpose() * residual / n - l2 * weights;
  grad_b = residual.mean();
}

FittedClassifier FittedClassifier::fit(ClassifierKind kind, const Matrix& X,
                                       const std::vector<int>& y,
                                       const ClassifierConfig& config) {
  check_binary_labels(X, y);
  FittedClassifier fitted;
  fitted.kind_ = kind;
  switch (kind) {
    case ClassifierKind::Logistic:
      fitted.model_ = fit_logistic(X, y, config.logistic);
      break;
    case ClassifierKind::LinearSvm:
      fitted.model_ = fit_svm(X, y, config.svm);
      break;
    case ClassifierKind::RandomForest:
      fitted.model_ = fit_forest(X, y, config.forest);
      break;
    case ClassifierKind::Qda:
      fitted.model_ = fit_qda(X, y, config.qda);
      break;
  }
  return fitted;
}

Vector FittedClassifier::scores(const Matrix& X) const {
  const int n = static_cast<int>(X.rows());
  Vector out(n);
  if (const auto* m = std::get_if<LogisticModel>(&model_)) {
    if (X.cols() != m->weights.size()) throw DimensionError("scores: column count mismatch");
    for (int i = 0; i < n; ++i) {
      out[i] = 1.0 / (1.0 + std::exp(-(X.row(i).dot(m->weights) + m->bias)));
    }
  } else if (const auto* m = std::get_if<SvmModel>(&model_)) {
    if (X.cols() != m->weights.size()) throw DimensionError("scores: column count mismatch");
    for (int i = 0; i < n; ++i) out[i] = X.row(i).dot(m->weights) + m->bias;
  } else if (const auto* m = std::get_if<ForestModel>(&model_)) {
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (const auto& tree : m->trees) sum += tree_score(tree, X.row(i));
      out[i] = sum / static_cast<double>(m->trees.size());
    }
  } else {
    const auto& qm = std::get<QdaModel>(model_);
    if (X.cols() != qm.mean0.size()) throw DimensionError("scores: column count mismatch");
    for (int i = 0; i < n; ++i) {
      const Vector x = X.row(i);
      const double l0 = gaussian_log_density(x, qm.mean0, qm.chol0, qm.log_det0) + qm.log_prior0;
      const double l1 = gaussian_log_density(x, qm.mean1, qm.chol1, qm.log_det1) + qm.log_prior1;
      out[i] = 1.0 / (1.0 + std::exp(l0 - l1));
    }
  }
  return out;
}

std::vector<int> FittedClassifier::predict(const Matrix& X) const {
  const Vector s = scores(X);
  const double cut = kind_ == ClassifierKind::LinearSvm ? 0.0 : 0.5;
  std::vector<int> out(static_cast<std::size_t>(s.size()));
  for (int i = 0; i < s.size(); ++i) out[static_cast<std::size_t>(i)] = s[i] > cut ? 1 : 0;
  return out;
}

PcaModel fit_pca(const Matrix& X, int n_components) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (n < 2) throw DimensionError("fit_pca: need at least two rows");
  if (n_components < 1 || n_components > std::min(n - 1, d)) {
    throw ConfigError("fit_pca: n_components must be in [1, min(rows-1, cols)]");
  }
  require_finite(X, "fit_pca");

  PcaModel model;
  model.mean = X.colwise().mean();
  const Matrix centered = X.rowwise() - model.mean.transpose();
  const Matrix cov = centered.transpose() * centered / (static_cast<double>(n) - 1.0);

  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw SingularCovarianceError("fit_pca: eigendecomposition failed");
  }
  const Vector eigenvalues = solver.eigenvalues();  // ascending
  const Matrix eigenvectors = solver.eigenvectors();
  const double total_variance = std::max(eigenvalues.sum(), 0.0);
  const double floor = 1e-12 * std::max(eigenvalues[d - 1], 1e-300);

  int kept = 0;
  for (int i = 0; i < n_components; ++i) {
    if (eigenvalues[d - 1 - i] > floor) ++kept;
  }
  model.rank_deficient = kept < n_components;
  kept = std::max(kept, 1);

  model.axes.resize(d, kept);
  model.explained_variance.resize(kept);
  model.explained_ratio.resize(kept);
  for (int i = 0; i < kept; ++i) {
    Vector axis = eigenvectors.col(d - 1 - i);
    // Sign convention: largest-magnitude component positive.
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis[arg] < 0) axis = -axis;
    model.axes.col(i) = axis;
    model.explained_variance[i] = std::max(eigenvalues[d - 1 - i], 0.0);
    model.explained_ratio[i] =
        total_variance > 0 ? model.explained_variance[i] / total_variance : 0.0;
  }
  return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& X) {
  if (X.cols() != model.mean.size()) throw DimensionError("pca_transform: column count mismatch");
  return (X.rowwise() - model.mean.transpose()) * model.axes;
}

Matrix pca_inverse_transform(const PcaModel& model, const Matrix& reduced) {
  if (reduced.cols() != model.axes.cols()) {
    throw DimensionError("pca_inverse_transform: component count mismatch");
  }
  return (reduced * model.axes.transpose()).rowwise() + model.mean.transpose();
}

namespace {

struct GmmState {
  std::vector<double> weights;
  std::vector<Vector> means;
  std::vector<Matrix> chols;
  std::vector<double> log_dets;
  std::vector<Matrix> covs;
};

bool factor_component(const Matrix& cov, Matrix& chol, double& log_det) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) return false;
  chol = llt.matrixL();
  log_det = 0.0;
  for (Eigen::Index i = 0; i < chol.rows(); ++i) log_det += 2.0 * std::log(chol(i, i));
  return true;
}

// Returns mean log-likelihood and fills per-row responsibilities.
double gmm_e_step(const Matrix& X, const GmmState& state, Matrix& resp) {
  const int n = static_cast<int>(X.rows());
  const int K = static_cast<int>(state.weights.size());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector x = X.row(i);
    double max_log = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      const double lp = std::log(state.weights[static_cast<std::size_t>(k)]) +
                        gaussian_log_density(x, state.means[static_cast<std::size_t>(k)],
                                             state.chols[static_cast<std::size_t>(k)],
                                             state.log_dets[static_cast<std::size_t>(k)]);
      resp(i, k) = lp;
      max_log = std::max(max_log, lp);
    }
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += std::exp(resp(i, k) - max_log);
    const double log_norm = max_log + std::log(sum);
    for (int k = 0; k < K; ++k) resp(i, k) = std::exp(resp(i, k) - log_norm);
    total += log_norm;
  }
  return total / n;
}

}  // namespace

GmmModel fit_gmm(const Matrix& X, const GmmConfig& config) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  const int K = config.n_components;
  if (K < 1) throw ConfigError("fit_gmm: need at least one component");
  if (n <= K) throw DimensionError("fit_gmm: need more rows than components");
  require_finite(X, "fit_gmm");

  const Matrix base_cov = ridged(sample_covariance(X), std::max(config.ridge_scale, 1e-12));

  GmmModel best;
  bool have_best = false;
  std::string last_failure = "no restarts attempted";

  for (int restart = 0; restart < std::max(config.n_restarts, 1); ++restart) {
    Rng rng(derive_seed(config.seed, 0x676d6dULL, static_cast<std::uint64_t>(restart)));  // "gmm"
    GmmState state;
    state.weights.assign(static_cast<std::size_t>(K), 1.0 / K);
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (int k = 0; k < K; ++k) {
      state.means.push_back(X.row(order[static_cast<std::size_t>(k)]));
      state.covs.push_back(base_cov);
    }
    state.chols.resize(static_cast<std::size_t>(K));
    state.log_dets.resize(static_cast<std::size_t>(K));
    bool ok = true;
    for (int k = 0; k < K; ++k) {
      if (!factor_component(state.covs[static_cast<std::size_t>(k)],
                            state.chols[static_cast<std::size_t>(k)],
                            state.log_dets[static_cast<std::size_t>(k)])) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      last_failure = "initial covariance not positive definite";
      continue;
    }

    Matrix resp(n, K);
    std::vector<double> trace;
    double prev = -std::numeric_limits<double>::infinity();
    int iter = 0;
    for (; iter < config.max_iter; ++iter) {
      const double loglik = gmm_e_step(X, state, resp);
      trace.push_back(loglik);
      if (loglik - prev < config.tol && iter > 0) break;
      prev = loglik;

      for (int k = 0; k < K; ++k) {
        const double nk = resp.col(k).sum();
        if (nk < 1e-8 * n) {
          ok = false;
          last_failure = "component collapsed below the regularization floor";
          break;
        }
        state.weights[static_cast<std::size_t>(k)] = nk / n;
        Vector mean = (resp.col(k).transpose() * X).transpose() / nk;
        Matrix cov = Matrix::Zero(d, d);
        for (int i = 0; i < n; ++i) {
          const Vector diff = X.row(i).transpose() - mean;
          cov.noalias() += resp(i, k) * diff * diff.transpose();
        }
        cov /= nk;
        cov = ridged(cov, std::max(config.ridge_scale, 1e-12));
        if (!factor_component(cov, state.chols[static_cast<std::size_t>(k)],
                              state.log_dets[static_cast<std::size_t>(k)])) {
          ok = false;
          last_failure = "component covariance lost positive definiteness";
          break;
        }
        state.means[static_cast<std::size_t>(k)] = std::move(mean);
        state.covs[static_cast<std::size_t>(k)] = std::move(cov);
      }
      if (!ok) break;
    }
    if (!ok) continue;

    if (!have_best || trace.back() > best.final_loglik) {
      GmmModel model;
      model.weights = state.weights;
      model.means = state.means;
      model.covariances = state.covs;
      model.loglik_trace = trace;
      model.final_loglik = trace.back();
      model.iterations = iter;
      best = std::move(model);
      have_best = true;
    }
  }

  if (!have_best) {
    throw DegenerateComponentError("fit_gmm: all restarts degenerated (" + last_failure + ")");
  }
  return best;
}

Matrix gmm_posterior(const GmmModel& model, const Matrix& X) {
  const int K = static_cast<int>(model.weights.size());
  GmmState state;
  state.weights = model.weights;
  state.means = model.means;
  state.covs = model.covariances;
  state.chols.resize(static_cast<std::size_t>(K));
  state.log_dets.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    if (!factor_component(model.covariances[static_cast<std::size_t>(k)],
                          state.chols[static_cast<std::size_t>(k)],
                          state.log_dets[static_cast<std::size_t>(k)])) {
      throw SingularCovarianceError("gmm_posterior: stored covariance not positive definite");
    }
  }
  Matrix resp(X.rows(), K);
  gmm_e_step(X, state, resp);
  return resp;
}

Vector gmm_loglik_rows(const GmmModel& model, const Matrix& X) {
  const int K = static_cast<int>(model.weights.size());
  std::vector<Matrix> chols(static_cast<std::size_t>(K));
  std::vector<double> log_dets(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    if (!factor_component(model.covariances[static_cast<std::size_t>(k)],
                          chols[static_cast<std::size_t>(k)],
                          log_dets[static_cast<std::size_t>(k)])) {
      throw SingularCovarianceError("gmm_loglik_rows: stored covariance not positive definite");
    }
  }
  Vector out(X.rows());
  for (int i = 0; i < X.rows(); ++i) {
    const Vector x = X.row(i);
    double max_log = -std::numeric_limits<double>::infinity();
    std::vector<double> lps(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      lps[static_cast<std::size_t>(k)] =
          std::log(model.weights[static_cast<std::size_t>(k)]) +
          gaussian_log_density(x, model.means[static_cast<std::size_t>(k)],
                               chols[static_cast<std::size_t>(k)],
                               log_dets[static_cast<std::size_t>(k)]);
      max_log = std::max(max_log, lps[static_cast<std::size_t>(k)]);
    }
    double sum = 0.0;
    for (double lp : lps) sum += std::exp(lp - max_log);
    out[i] = max_log + std::log(sum);
  }
  return out;
}

}  // namespace tlaudit
