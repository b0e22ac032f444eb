#include "tlaudit/student_apis.hpp"

#include "tlaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tlaudit {

Vector feature_api(const Teacher& teacher, const Vector& x) {
  Matrix row(1, x.size());
  row.row(0) = x;
  return extract_features(teacher, row).row(0);
}

namespace {

std::vector<double> threshold_candidates(std::vector<double> distances) {
  std::sort(distances.begin(), distances.end());
  distances.erase(std::unique(distances.begin(), distances.end()), distances.end());
  std::vector<double> candidates;
  for (std::size_t i = 0; i + 1 < distances.size(); ++i) {
    candidates.push_back((distances[i] + distances[i + 1]) / 2.0);
  }
  return candidates;
}

double threshold_accuracy(const std::vector<double>& distances, const std::vector<int>& same,
                          const std::vector<int>& idx, double threshold) {
  int correct = 0;
  for (int i : idx) {
    const bool predict_same = distances[static_cast<std::size_t>(i)] < threshold;
    if (predict_same == (same[static_cast<std::size_t>(i)] != 0)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

// Smallest candidate threshold maximizing accuracy over idx.
double best_threshold(const std::vector<double>& distances, const std::vector<int>& same,
                      const std::vector<int>& idx) {
  std::vector<double> in_fold;
  in_fold.reserve(idx.size());
  for (int i : idx) in_fold.push_back(distances[static_cast<std::size_t>(i)]);
  const std::vector<double> candidates = threshold_candidates(std::move(in_fold));
  if (candidates.empty()) {
    // All observed distances equal; any positive threshold is as good.
    return distances[static_cast<std::size_t>(idx.front())] + 1.0;
  }
  double best_tau = candidates.front();
  double best_acc = -1.0;
  for (double tau : candidates) {
    const double acc = threshold_accuracy(distances, same, idx, tau);
    if (acc > best_acc) {
      best_acc = acc;
      best_tau = tau;
    }
  }
  return best_tau;
}

}  // namespace

CalibrationResult calibrate_threshold(const std::vector<double>& distances,
                                      const std::vector<int>& same_identity, int folds,
                                      std::uint64_t seed) {
  if (distances.size() != same_identity.size()) {
    throw DimensionError("calibrate_threshold: distances and labels differ in length");
  }
  if (folds < 2) throw ConfigError("calibrate_threshold: folds must be at least 2");
  bool has_same = false, has_diff = false;
  for (int l : same_identity) (l != 0 ? has_same : has_diff) = true;
  if (!has_same || !has_diff) {
    throw AllOneClassError("calibrate_threshold: pairs contain only one label");
  }

  const int n = static_cast<int>(distances.size());
  const auto fold_sets = kfold_split(n, folds, &same_identity, seed);
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);

  double accuracy_sum = 0.0;
  for (const auto& held_out : fold_sets) {
    std::vector<char> in_test(static_cast<std::size_t>(n), 0);
    for (int i : held_out) in_test[static_cast<std::size_t>(i)] = 1;
    std::vector<int> train;
    train.reserve(static_cast<std::size_t>(n) - held_out.size());
    for (int i = 0; i < n; ++i) {
      if (!in_test[static_cast<std::size_t>(i)]) train.push_back(i);
    }
    const double tau = best_threshold(distances, same_identity, train);
    accuracy_sum += threshold_accuracy(distances, same_identity, held_out, tau);
  }

  CalibrationResult result;
  result.accuracy = accuracy_sum / folds;
  result.threshold = best_threshold(distances, same_identity, all);
  return result;
}

VerificationStudent make_verification_student(const std::vector<double>& distances,
                                              const std::vector<int>& same_identity, int folds,
                                              std::uint64_t seed) {
  const CalibrationResult result = calibrate_threshold(distances, same_identity, folds, seed);
  VerificationStudent student;
  student.threshold = result.threshold;
  student.calibration_accuracy = result.accuracy;
  if (!(student.threshold > 0.0)) {
    throw NonConvergenceError("make_verification_student: calibrated threshold is not positive");
  }
  return student;
}

namespace {

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double max_logit = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd exps = (logits.row(i).array() - max_logit).exp();
    out.row(i) = exps / exps.sum();
  }
  return out;
}

double head_loss_and_grad(const Matrix& X, const std::vector<int>& targets, const Matrix& w,
                          const Vector& b, Matrix* gw, Vector* gb) {
  const int n = static_cast<int>(X.rows());
  const Matrix probs = softmax_rows((X * w).rowwise() + b.transpose());
  double loss = 0.0;
  Matrix dlogits = probs;
  for (int i = 0; i < n; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    loss -= std::log(std::max(probs(i, t), 1e-300));
    dlogits(i, t) -= 1.0;
  }
  loss /= n;
  if (gw) {
    dlogits /= n;
    *gw = X.transpose() * dlogits;
    *gb = dlogits.colwise().sum();
  }
  return loss;
}

}  // namespace

RecognitionStudent finetune_student(const Matrix& head_features,
                                    const std::vector<int>& head_labels,
                                    const std::vector<int>& head_classes,
                                    const std::vector<int>& forbidden_ids,
                                    const FinetuneConfig& config) {
  if (head_features.rows() == 0) throw DimensionError("finetune_student: no head instances");
  if (static_cast<int>(head_labels.size()) != head_features.rows()) {
    throw DimensionError("finetune_student: label count mismatch");
  }
  for (int cls : head_classes) {
    if (std::find(forbidden_ids.begin(), forbidden_ids.end(), cls) != forbidden_ids.end()) {
      throw ClassOverlapError("finetune_student: head class " + std::to_string(cls) +
                              " overlaps the target identities");
    }
  }
  std::vector<int> targets;
  targets.reserve(head_labels.size());
  for (int label : head_labels) {
    const auto it = std::find(head_classes.begin(), head_classes.end(), label);
    if (it == head_classes.end()) {
      throw ClassOverlapError("finetune_student: instance label " + std::to_string(label) +
                              " is not a head class");
    }
    targets.push_back(static_cast<int>(it - head_classes.begin()));
  }

  // Per-class split so every head class appears in both train and validation.
  const int n = static_cast<int>(head_features.rows());
  std::vector<int> train_idx, val_idx;
  Rng split_rng(derive_seed(config.seed, 0x76616cULL));  // "val"
  for (std::size_t c = 0; c < head_classes.size(); ++c) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i) {
      if (targets[static_cast<std::size_t>(i)] == static_cast<int>(c)) idx.push_back(i);
    }
    if (idx.size() < 2) {
      throw ConfigError("finetune_student: head class needs at least two instances");
    }
    split_rng.shuffle(idx);
    const int n_val = std::max(1, static_cast<int>(std::floor(config.validation_fraction *
                                                              static_cast<double>(idx.size()))));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (static_cast<int>(i) < n_val ? val_idx : train_idx).push_back(idx[i]);
    }
  }

  auto gather = [&](const std::vector<int>& idx, Matrix& X, std::vector<int>& t) {
    X.resize(static_cast<Eigen::Index>(idx.size()), head_features.cols());
    t.clear();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      X.row(static_cast<Eigen::Index>(i)) = head_features.row(idx[i]);
      t.push_back(targets[static_cast<std::size_t>(idx[i])]);
    }
  };
  Matrix train_X, val_X;
  std::vector<int> train_t, val_t;
  gather(train_idx, train_X, train_t);
  gather(val_idx, val_X, val_t);

  const int k = static_cast<int>(head_features.cols());
  const int c = static_cast<int>(head_classes.size());
  RecognitionStudent student;
  student.head_classes = head_classes;
  student.head_w = Matrix::Zero(k, c);
  student.head_b = Vector::Zero(c);

  Matrix gw;
  Vector gb;
  double loss = head_loss_and_grad(train_X, train_t, student.head_w, student.head_b, &gw, &gb);
  double lr = config.learning_rate;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    while (lr > 1e-12) {
      const Matrix w_try = student.head_w - lr * gw;
      const Vector b_try = student.head_b - lr * gb;
      Matrix gw_try;
      Vector gb_try;
      const double loss_try = head_loss_and_grad(train_X, train_t, w_try, b_try, &gw_try, &gb_try);
      if (loss_try <= loss) {
        student.head_w = w_try;
        student.head_b = b_try;
        gw = std::move(gw_try);
        gb = std::move(gb_try);
        loss = loss_try;
        break;
      }
      lr *= 0.5;
    }
  }

  const Matrix val_probs = softmax_rows((val_X * student.head_w).rowwise() +
                                        student.head_b.transpose());
  int correct = 0;
  for (Eigen::Index i = 0; i < val_probs.rows(); ++i) {
    Eigen::Index arg = 0;
    val_probs.row(i).maxCoeff(&arg);
    if (static_cast<int>(arg) == val_t[static_cast<std::size_t>(i)]) ++correct;
  }
  student.validation_accuracy = static_cast<double>(correct) / static_cast<double>(val_probs.rows());
  if (student.validation_accuracy < config.min_accuracy) {
    throw NonConvergenceError("finetune_student: validation accuracy " +
                              format_double(student.validation_accuracy) + " below gate " +
                              format_double(config.min_accuracy));
  }
  return student;
}

Vector recognition_api(const RecognitionStudent& student, const Vector& feature) {
  if (feature.size() != student.head_w.rows()) {
    throw DimensionError("recognition_api: feature dimensionality mismatch");
  }
  const Vector logits = student.head_w.transpose() * feature + student.head_b;
  const double max_logit = logits.maxCoeff();
  Vector probs = (logits.array() - max_logit).exp();
  probs /= probs.sum();
  return probs;
}

RecognitionStudent make_recognition_student(const World& world, int c,
                                            const FinetuneConfig& config) {
  if (!world.has_features) throw ConfigError("make_recognition_student: features not materialized");
  if (c < 2 || c > static_cast<int>(world.head_ids.size())) {
    throw ConfigError("make_recognition_student: head class count out of range");
  }
  std::vector<int> classes(world.head_ids.begin(), world.head_ids.begin() + c);
  std::vector<int> rows;
  std::vector<int> labels;
  for (std::size_t i = 0; i < world.head_instances.size(); ++i) {
    const int y1 = world.head_instances[i].y1;
    if (std::find(classes.begin(), classes.end(), y1) != classes.end()) {
      rows.push_back(static_cast<int>(i));
      labels.push_back(y1);
    }
  }
  Matrix features(static_cast<Eigen::Index>(rows.size()), world.head_features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    features.row(static_cast<Eigen::Index>(i)) = world.head_features.row(rows[i]);
  }
  std::vector<int> forbidden;
  forbidden.reserve(world.member_ids.size() + world.nonmember_ids.size());
  forbidden.insert(forbidden.end(), world.member_ids.begin(), world.member_ids.end());
  forbidden.insert(forbidden.end(), world.nonmember_ids.begin(), world.nonmember_ids.end());
  return finetune_student(features, labels, classes, forbidden, config);
}

StudentApis::StudentApis(const World& world, DefenseChain defense)
    : world_(&world), defense_(std::move(defense)) {
  if (!world.has_features) throw ConfigError("StudentApis: features not materialized");
}

StudentApis::StudentApis(const World& world, RecognitionStudent recognition, DefenseChain defense)
    : world_(&world), recognition_(std::move(recognition)), defense_(std::move(defense)) {
  if (!world.has_features) throw ConfigError("StudentApis: features not materialized");
}

const RecognitionStudent& StudentApis::recognition_student() const {
  if (!recognition_) throw ConfigError("StudentApis: no recognition student attached");
  return *recognition_;
}

Vector StudentApis::feature(int i) const {
  const Vector clean = world_->features.row(i);
  if (defense_.empty()) return clean;
  return defense_.apply(clean, Surface::Feature,
                        static_cast<std::uint64_t>(world_->instances[static_cast<std::size_t>(i)].id));
}

double StudentApis::verify(int i, int j) const {
  const double clean = (world_->features.row(i) - world_->features.row(j)).norm();
  if (defense_.empty()) return clean;
  const std::uint64_t a = static_cast<std::uint64_t>(
      world_->instances[static_cast<std::size_t>(std::min(i, j))].id);
  const std::uint64_t b = static_cast<std::uint64_t>(
      world_->instances[static_cast<std::size_t>(std::max(i, j))].id);
  return defense_.apply_scalar(clean, Surface::Verification, (a << 32) | b);
}

Vector StudentApis::recognition(int i) const {
  const Vector clean = recognition_api(recognition_student(),
                                       world_->features.row(i).transpose());
  if (defense_.empty()) return clean;
  return defense_.apply(clean, Surface::Recognition,
                        static_cast<std::uint64_t>(world_->instances[static_cast<std::size_t>(i)].id));
}

std::vector<std::pair<int, double>> StudentApis::recognition_masked(int i) const {
  if (!defense_.topk()) throw ConfigError("recognition_masked: defense chain has no top-k filter");
  return topk_mask(recognition(i), defense_.topk()->keep_k);
}

}  // namespace tlaudit
