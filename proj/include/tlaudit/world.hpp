#pragma once

#include "tlaudit/common.hpp"

namespace tlaudit {

/// Knobs for the synthetic identity universe. Identities are isotropic
/// Gaussian clusters; a binary attribute shifts the cluster center along a
/// fixed direction. Oracle mode skips the teacher and emits features directly
/// with a known member/non-member concentration gap.
struct WorldConfig {
  int input_dim = 64;
  int feature_dim = 32;  // k: teacher feature size
  int n_member_classes = 40;
  int n_nonmember_classes = 40;
  int images_per_class = 30;  // m
  double class_spread = 0.25;
  double center_spread = 1.0;
  // Two-tier center-scale profile mirroring the uneven spectrum of real
  // embeddings: the first n_boost_dims dimensions carry boost_factor times the
  // center spread. The boosted block dominates distances and the head's
  // logits; the plain block keeps per-dimension variation on the scale of the
  // class spread.
  int n_boost_dims = 0;
  double boost_factor = 1.0;
  double concentration_gap = 2.0;  // gamma: oracle non-member / member spread ratio
  // Per-identity spread multiplier exp(h * z), z standard normal: identities
  // differ in diversity, so the two populations' aggregate statistics overlap
  // instead of separating perfectly. 0 keeps every class at its population
  // spread.
  double spread_heterogeneity = 0.0;
  double attribute_balance = 0.5;
  double attribute_shift = 0.8;  // magnitude of the s=1 center offset
  // Shared low-rank per-instance variation, identical for members and
  // non-members. Mimics instance-level nuisance (pose, lighting) so that
  // per-instance views carry variation that is uninformative about membership.
  int nuisance_rank = 0;
  double nuisance_scale = 0.0;
  // Per-instance multiplicative gain exp(s * z) on the whole vector (capture
  // quality). A few percent barely moves feature geometry but swings the
  // confidence scores of a sharp softmax head, for both populations alike.
  double instance_gain_log_sd = 0.0;
  // Extra identity pool for the fine-tuned recognition head, disjoint from the
  // target universe. Head centers are drawn at head_center_factor times the
  // center spread: closer head identities force larger-margin head weights,
  // which is what a converged fine-tuned head looks like.
  int n_head_classes = 10;
  int head_images_per_class = 10;
  double head_center_factor = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Instance {
  int id = 0;      // unique per instance
  Vector x;        // raw input; empty in oracle (feature-space) worlds
  int y1 = 0;      // identity label
  int y2 = 0;      // membership label: 1 iff y1 is a member-class identity
  int s = 0;       // sensitive attribute
};

struct World {
  WorldConfig config;
  std::vector<Instance> instances;  // the target universe: member plus non-member
  std::vector<int> member_ids;      // identity labels trained into the teacher
  std::vector<int> nonmember_ids;
  std::vector<Instance> head_instances;  // head-class pool, disjoint identities
  std::vector<int> head_ids;

  // Feature rows aligned with instances / head_instances. Filled by the oracle
  // generator or by materialize_features() after teacher training.
  Matrix features;
  Matrix head_features;
  bool has_features = false;

  std::vector<int> identity_of_instances() const;
  std::vector<int> membership_of_instances() const;
  Matrix raw_inputs() const;
};

/// Raw-input world: member and non-member identity clusters plus the head
/// pool, everything deterministic in config.seed. Features are not attached;
/// train a teacher and call materialize_features, or use the oracle generator.
World generate_world(const WorldConfig& config);

/// Feature-space world with an exactly known concentration gap: member classes
/// have within-class spread class_spread, non-member (and head) classes
/// concentration_gap times that. Used as ground truth by tests.
World generate_oracle_features(const WorldConfig& config);

struct TeacherConfig {
  int epochs = 200;
  double learning_rate = 0.5;
  int batch_size = 64;  // >= training size switches to full-batch descent
  double min_accuracy = 0.9;
  std::uint64_t seed = 7;
};

/// Two-layer perceptron: tanh hidden layer of width feature_dim, softmax
/// output over the member classes. The hidden activation is the feature.
struct Teacher {
  Matrix w1;  // input_dim x k
  Vector b1;
  Matrix w2;  // k x n_member_classes
  Vector b2;
  std::vector<int> class_order;  // member identity per output index
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
};

/// Minimizes softmax cross-entropy on the member instances by mini-batch
/// gradient descent (full-batch uses backtracking so the loss never
/// increases). Throws NonConvergenceError below min_accuracy.
Teacher train_teacher(const World& world, const TeacherConfig& config);
Teacher train_teacher(const World& world, int epochs, double learning_rate);

/// Hidden-layer activations, one row per input row.
Matrix extract_features(const Teacher& teacher, const Matrix& xs);

/// Mean cross-entropy of the teacher on (xs, labels); labels are identity
/// labels that must appear in teacher.class_order.
double teacher_loss(const Teacher& teacher, const Matrix& xs, const std::vector<int>& labels);

/// Gradient of teacher_loss with respect to every parameter, flattened in
/// (w1, b1, w2, b2) order; used for the finite-difference check.
Vector teacher_loss_gradient(const Teacher& teacher, const Matrix& xs,
                             const std::vector<int>& labels);

/// Attaches teacher features to a raw-input world (instances and head pool).
void materialize_features(World& world, const Teacher& teacher);

/// One-call pipeline: oracle mode emits features directly; trained mode
/// generates raw inputs, trains the teacher, and materializes its features.
World build_world_with_features(const WorldConfig& config, bool oracle,
                                const TeacherConfig& teacher_config = {},
                                Teacher* teacher_out = nullptr);

}  // namespace tlaudit
