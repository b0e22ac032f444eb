#pragma once

#include "tlaudit/defenses.hpp"
#include "tlaudit/world.hpp"

namespace tlaudit {

/// Single-input feature surface: the black-box boundary attacks go through.
Vector feature_api(const Teacher& teacher, const Vector& x);

struct CalibrationResult {
  double threshold = 0.0;
  double accuracy = 0.0;  // mean held-out accuracy across folds
};

/// Cross-validated threshold selection for the verification student. Per fold
/// the accuracy-maximizing threshold on the training part is evaluated on the
/// held-out part; the returned threshold maximizes accuracy on the full set.
/// Candidate thresholds are midpoints of consecutive sorted distances.
CalibrationResult calibrate_threshold(const std::vector<double>& distances,
                                      const std::vector<int>& same_identity, int folds,
                                      std::uint64_t seed = 0);

struct VerificationStudent {
  double threshold = 0.0;
  double calibration_accuracy = 0.0;

  bool same_identity(double distance) const { return distance < threshold; }
};

/// Calibrated student over labeled pairs; the threshold is strictly positive
/// afterwards.
VerificationStudent make_verification_student(const std::vector<double>& distances,
                                              const std::vector<int>& same_identity, int folds,
                                              std::uint64_t seed = 0);

struct RecognitionStudent {
  Matrix head_w;                  // feature_dim x c
  Vector head_b;
  std::vector<int> head_classes;  // identity per output index
  double validation_accuracy = 0.0;
};

struct FinetuneConfig {
  int epochs = 300;
  double learning_rate = 1.0;
  double validation_fraction = 0.2;
  double min_accuracy = 0.9;
  std::uint64_t seed = 11;
};

/// Trains only the softmax head on frozen features. head_classes must be
/// disjoint from forbidden_ids (the target identities); every head instance
/// label must be one of head_classes.
RecognitionStudent finetune_student(const Matrix& head_features,
                                    const std::vector<int>& head_labels,
                                    const std::vector<int>& head_classes,
                                    const std::vector<int>& forbidden_ids,
                                    const FinetuneConfig& config = {});

/// Softmax over the head classes; components are non-negative and sum to 1.
Vector recognition_api(const RecognitionStudent& student, const Vector& feature);

/// Convenience: fine-tune a head on the first `c` head-pool identities of a
/// world with materialized features.
RecognitionStudent make_recognition_student(const World& world, int c,
                                            const FinetuneConfig& config = {});

/// The three API surfaces over one world, with an optional defense chain.
/// Queries are keyed by instance id so defended responses are reproducible
/// under any query order or concurrency.
class StudentApis {
 public:
  StudentApis(const World& world, DefenseChain defense = {});
  StudentApis(const World& world, RecognitionStudent recognition, DefenseChain defense = {});

  int instance_count() const { return static_cast<int>(world_->instances.size()); }

  /// Defended feature row of target instance i.
  Vector feature(int i) const;

  /// Defended Euclidean distance between the features of target instances
  /// i and j; symmetric, including under randomization.
  double verify(int i, int j) const;

  /// Defended confidence scores of target instance i (vector filters only).
  Vector recognition(int i) const;

  /// Confidence scores after the chain's trailing top-k mask. Valid only when
  /// the chain carries one.
  std::vector<std::pair<int, double>> recognition_masked(int i) const;

  bool has_recognition() const { return recognition_.has_value(); }
  const RecognitionStudent& recognition_student() const;
  const DefenseChain& defense() const { return defense_; }
  const World& world() const { return *world_; }

 private:
  const World* world_;
  std::optional<RecognitionStudent> recognition_;
  DefenseChain defense_;
};

}  // namespace tlaudit
