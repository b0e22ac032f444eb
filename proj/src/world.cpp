#include "tlaudit/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tlaudit {

namespace {

enum Stream : std::uint64_t {
  kAttrDirection = 1,
  kNuisanceBasis = 2,
  kIdentityCenter = 3,
  kInstanceDraw = 4,
  kAttrAssign = 5,
  kTeacherInit = 6,
  kTeacherEpoch = 7,
};

Vector unit_direction(int dim, std::uint64_t seed) {
  Rng rng(seed);
  Vector v = rng.normal_vector(dim);
  const double norm = v.norm();
  return norm > 0 ? Vector(v / norm) : Vector(Vector::Unit(dim, 0));
}

// Exactly round(balance * n) of the split's identities get s = 1.
std::vector<int> assign_attributes(int n_ids, double balance, std::uint64_t seed) {
  std::vector<int> order(static_cast<std::size_t>(n_ids));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const int n_ones = static_cast<int>(std::lround(balance * n_ids));
  std::vector<int> s(static_cast<std::size_t>(n_ids), 0);
  for (int i = 0; i < n_ones; ++i) s[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
  return s;
}

struct IdentitySpec {
  int y1;
  int y2;
  int s;
  double spread;
  int count;
  bool target_universe;  // head-pool identities are curated: tight, homogeneous centers
};

}  // namespace

void WorldConfig::validate() const {
  if (input_dim < 1) throw ConfigError("world: input_dim must be positive");
  if (feature_dim < 1) throw ConfigError("world: feature_dim must be positive");
  if (n_member_classes < 1) throw ConfigError("world: n_member_classes must be at least 1");
  if (n_nonmember_classes < 1) throw ConfigError("world: n_nonmember_classes must be at least 1");
  if (images_per_class < 2) throw ConfigError("world: images_per_class must be at least 2");
  if (class_spread <= 0) throw ConfigError("world: class_spread must be positive");
  if (center_spread <= 0) throw ConfigError("world: center_spread must be positive");
  if (n_boost_dims < 0) throw ConfigError("world: n_boost_dims must be non-negative");
  if (boost_factor <= 0) throw ConfigError("world: boost_factor must be positive");
  if (concentration_gap < 1) throw ConfigError("world: concentration_gap must be at least 1");
  if (spread_heterogeneity < 0) {
    throw ConfigError("world: spread_heterogeneity must be non-negative");
  }
  if (attribute_balance < 0 || attribute_balance > 1) {
    throw ConfigError("world: attribute_balance must be in [0,1]");
  }
  if (nuisance_rank < 0 || nuisance_scale < 0) {
    throw ConfigError("world: nuisance parameters must be non-negative");
  }
  if (instance_gain_log_sd < 0) {
    throw ConfigError("world: instance_gain_log_sd must be non-negative");
  }
  if (n_head_classes < 0 || head_images_per_class < 0) {
    throw ConfigError("world: head pool sizes must be non-negative");
  }
  if (head_center_factor <= 0) {
    throw ConfigError("world: head_center_factor must be positive");
  }
}

std::vector<int> World::identity_of_instances() const {
  std::vector<int> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(inst.y1);
  return out;
}

std::vector<int> World::membership_of_instances() const {
  std::vector<int> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(inst.y2);
  return out;
}

Matrix World::raw_inputs() const {
  if (instances.empty() || instances.front().x.size() == 0) {
    throw DimensionError("world: raw inputs not present (oracle world?)");
  }
  Matrix xs(static_cast<Eigen::Index>(instances.size()), instances.front().x.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    xs.row(static_cast<Eigen::Index>(i)) = instances[i].x;
  }
  return xs;
}

namespace {

// Shared skeleton for both world generators; `dim` is the space instances are
// drawn in (raw input space or feature space).
World build_world(const WorldConfig& config, int dim, bool oracle) {
  config.validate();
  World world;
  world.config = config;

  const Vector attr_dir = unit_direction(dim, derive_seed(config.seed, kAttrDirection));
  Vector dim_scale = Vector::Ones(dim);
  for (int j = 0; j < std::min(config.n_boost_dims, dim); ++j) {
    dim_scale[j] = config.boost_factor;
  }
  Matrix nuisance = Matrix::Zero(dim, std::max(config.nuisance_rank, 1));
  for (int r = 0; r < config.nuisance_rank; ++r) {
    nuisance.col(r) = config.nuisance_scale *
                      unit_direction(dim, derive_seed(config.seed, kNuisanceBasis,
                                                      static_cast<std::uint64_t>(r)));
  }

  const int n_member = config.n_member_classes;
  const int n_nonmember = config.n_nonmember_classes;
  const int n_head = config.n_head_classes;

  const std::vector<int> s_member = assign_attributes(n_member, config.attribute_balance,
                                                      derive_seed(config.seed, kAttrAssign, 0));
  const std::vector<int> s_nonmember = assign_attributes(n_nonmember, config.attribute_balance,
                                                         derive_seed(config.seed, kAttrAssign, 1));
  const std::vector<int> s_head = assign_attributes(n_head, config.attribute_balance,
                                                    derive_seed(config.seed, kAttrAssign, 2));

  // In oracle mode the training-induced concentration gap is imposed directly:
  // member spread stays at class_spread, everything untrained gets
  // concentration_gap times that. In raw mode all identities share one spread.
  const double member_spread = config.class_spread;
  const double other_spread = oracle ? config.concentration_gap * config.class_spread
                                     : config.class_spread;

  std::vector<IdentitySpec> specs;
  int next_id = 0;
  for (int i = 0; i < n_member; ++i) {
    specs.push_back({next_id, 1, s_member[static_cast<std::size_t>(i)], member_spread,
                     config.images_per_class, true});
    world.member_ids.push_back(next_id);
    ++next_id;
  }
  for (int i = 0; i < n_nonmember; ++i) {
    specs.push_back({next_id, 0, s_nonmember[static_cast<std::size_t>(i)], other_spread,
                     config.images_per_class, true});
    world.nonmember_ids.push_back(next_id);
    ++next_id;
  }
  // Head-pool identities model the student's curated fine-tuning set: tight,
  // homogeneous clusters so the head trains to a confident optimum.
  std::vector<IdentitySpec> head_specs;
  for (int i = 0; i < n_head; ++i) {
    head_specs.push_back({next_id, 0, s_head[static_cast<std::size_t>(i)], member_spread,
                          config.head_images_per_class, false});
    world.head_ids.push_back(next_id);
    ++next_id;
  }

  int instance_id = 0;
  auto emit = [&](const std::vector<IdentitySpec>& list, std::vector<Instance>& out,
                  Matrix& feats) {
    int total = 0;
    for (const auto& spec : list) total += spec.count;
    if (oracle) feats.resize(total, dim);
    int row = 0;
    for (const auto& spec : list) {
      Rng center_rng(derive_seed(config.seed, kIdentityCenter, static_cast<std::uint64_t>(spec.y1)));
      const double center_scale =
          spec.target_universe ? config.center_spread
                               : config.center_spread * config.head_center_factor;
      Vector center = center_scale * dim_scale.cwiseProduct(center_rng.normal_vector(dim));
      center += static_cast<double>(spec.s) * config.attribute_shift * attr_dir;
      const double spread =
          spec.target_universe
              ? spec.spread * std::exp(config.spread_heterogeneity * center_rng.normal())
              : spec.spread;
      for (int j = 0; j < spec.count; ++j) {
        Rng draw_rng(derive_seed(config.seed, kInstanceDraw, static_cast<std::uint64_t>(instance_id)));
        Vector point = center + spread * draw_rng.normal_vector(dim);
        if (config.nuisance_rank > 0) {
          point += nuisance.leftCols(config.nuisance_rank) *
                   draw_rng.normal_vector(config.nuisance_rank);
        }
        if (config.instance_gain_log_sd > 0) {
          point *= std::exp(config.instance_gain_log_sd * draw_rng.normal());
        }
        Instance inst;
        inst.id = instance_id++;
        inst.y1 = spec.y1;
        inst.y2 = spec.y2;
        inst.s = spec.s;
        if (oracle) {
          feats.row(row++) = point;
        } else {
          inst.x = std::move(point);
        }
        out.push_back(std::move(inst));
      }
    }
  };

  emit(specs, world.instances, world.features);
  emit(head_specs, world.head_instances, world.head_features);
  world.has_features = oracle;
  return world;
}

}  // namespace

World generate_world(const WorldConfig& config) {
  return build_world(config, config.input_dim, /*oracle=*/false);
}

World generate_oracle_features(const WorldConfig& config) {
  return build_world(config, config.feature_dim, /*oracle=*/true);
}

namespace {

double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& target_index,
                             Matrix* dlogits) {
  const int n = static_cast<int>(logits.rows());
  double loss = 0.0;
  if (dlogits) dlogits->resize(logits.rows(), logits.cols());
  for (int i = 0; i < n; ++i) {
    const double max_logit = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd shifted = logits.row(i).array() - max_logit;
    const Eigen::RowVectorXd exps = shifted.array().exp();
    const double denom = exps.sum();
    const int t = target_index[static_cast<std::size_t>(i)];
    loss += std::log(denom) - shifted[t];
    if (dlogits) {
      dlogits->row(i) = exps / denom;
      (*dlogits)(i, t) -= 1.0;
    }
  }
  if (dlogits) *dlogits /= n;
  return loss / n;
}

struct TrainData {
  Matrix xs;
  std::vector<int> targets;  // index into class_order
};

TrainData member_training_data(const World& world, const std::vector<int>& class_order) {
  std::vector<const Instance*> members;
  for (const auto& inst : world.instances) {
    if (inst.y2 == 1) members.push_back(&inst);
  }
  if (members.empty()) throw ConfigError("train_teacher: world has no member instances");
  TrainData data;
  data.xs.resize(static_cast<Eigen::Index>(members.size()), members.front()->x.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    data.xs.row(static_cast<Eigen::Index>(i)) = members[i]->x;
    const auto it = std::find(class_order.begin(), class_order.end(), members[i]->y1);
    data.targets.push_back(static_cast<int>(it - class_order.begin()));
  }
  return data;
}

}  // namespace

Matrix extract_features(const Teacher& teacher, const Matrix& xs) {
  if (xs.cols() != teacher.w1.rows()) {
    throw DimensionError("extract_features: input dimensionality mismatch");
  }
  return (((xs * teacher.w1).rowwise() + teacher.b1.transpose()).array().tanh()).matrix();
}

double teacher_loss(const Teacher& teacher, const Matrix& xs, const std::vector<int>& labels) {
  const Matrix hidden = extract_features(teacher, xs);
  const Matrix logits = (hidden * teacher.w2).rowwise() + teacher.b2.transpose();
  std::vector<int> targets;
  targets.reserve(labels.size());
  for (int label : labels) {
    const auto it = std::find(teacher.class_order.begin(), teacher.class_order.end(), label);
    if (it == teacher.class_order.end()) {
      throw ConfigError("teacher_loss: label not among teacher classes");
    }
    targets.push_back(static_cast<int>(it - teacher.class_order.begin()));
  }
  return softmax_cross_entropy(logits, targets, nullptr);
}

namespace {

struct Gradients {
  Matrix gw1;
  Vector gb1;
  Matrix gw2;
  Vector gb2;
};

double forward_backward(const Teacher& teacher, const Matrix& xs,
                        const std::vector<int>& targets, Gradients& grads) {
  const Matrix hidden = extract_features(teacher, xs);
  const Matrix logits = (hidden * teacher.w2).rowwise() + teacher.b2.transpose();
  Matrix dlogits;
  const double loss = softmax_cross_entropy(logits, targets, &dlogits);
  grads.gw2 = hidden.transpose() * dlogits;
  grads.gb2 = dlogits.colwise().sum();
  const Matrix dhidden = dlogits * teacher.w2.transpose();
  const Matrix dz = dhidden.array() * (1.0 - hidden.array().square());
  grads.gw1 = xs.transpose() * dz;
  grads.gb1 = dz.colwise().sum();
  return loss;
}

}  // namespace

Vector teacher_loss_gradient(const Teacher& teacher, const Matrix& xs,
                             const std::vector<int>& labels) {
  std::vector<int> targets;
  for (int label : labels) {
    const auto it = std::find(teacher.class_order.begin(), teacher.class_order.end(), label);
    if (it == teacher.class_order.end()) {
      throw ConfigError("teacher_loss_gradient: label not among teacher classes");
    }
    targets.push_back(static_cast<int>(it - teacher.class_order.begin()));
  }
  Gradients grads;
  forward_backward(teacher, xs, targets, grads);
  Vector flat(grads.gw1.size() + grads.gb1.size() + grads.gw2.size() + grads.gb2.size());
  Eigen::Index offset = 0;
  flat.segment(offset, grads.gw1.size()) = Eigen::Map<const Vector>(grads.gw1.data(), grads.gw1.size());
  offset += grads.gw1.size();
  flat.segment(offset, grads.gb1.size()) = grads.gb1;
  offset += grads.gb1.size();
  flat.segment(offset, grads.gw2.size()) = Eigen::Map<const Vector>(grads.gw2.data(), grads.gw2.size());
  offset += grads.gw2.size();
  flat.segment(offset, grads.gb2.size()) = grads.gb2;
  return flat;
}

Teacher train_teacher(const World& world, const TeacherConfig& config) {
  if (config.epochs < 1) throw ConfigError("train_teacher: epochs must be at least 1");
  if (config.learning_rate <= 0) throw ConfigError("train_teacher: learning_rate must be positive");

  Teacher teacher;
  teacher.class_order = world.member_ids;
  const TrainData data = member_training_data(world, teacher.class_order);
  const int n = static_cast<int>(data.xs.rows());
  const int input_dim = static_cast<int>(data.xs.cols());
  const int k = world.config.feature_dim;
  const int n_classes = static_cast<int>(teacher.class_order.size());

  Rng init(derive_seed(config.seed, kTeacherInit));
  teacher.w1.resize(input_dim, k);
  for (Eigen::Index i = 0; i < teacher.w1.size(); ++i) {
    teacher.w1.data()[i] = init.normal() / std::sqrt(static_cast<double>(input_dim));
  }
  teacher.b1 = Vector::Zero(k);
  teacher.w2.resize(k, n_classes);
  for (Eigen::Index i = 0; i < teacher.w2.size(); ++i) {
    teacher.w2.data()[i] = init.normal() / std::sqrt(static_cast<double>(k));
  }
  teacher.b2 = Vector::Zero(n_classes);

  const bool full_batch = config.batch_size >= n;
  double lr = config.learning_rate;
  Gradients grads;

  if (full_batch) {
    double loss = forward_backward(teacher, data.xs, data.targets, grads);
    teacher.epoch_loss.push_back(loss);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      // Backtracking keeps the full-batch loss non-increasing.
      while (lr > 1e-12) {
        Teacher trial = teacher;
        trial.w1 -= lr * grads.gw1;
        trial.b1 -= lr * grads.gb1;
        trial.w2 -= lr * grads.gw2;
        trial.b2 -= lr * grads.gb2;
        Gradients trial_grads;
        const double trial_loss = forward_backward(trial, data.xs, data.targets, trial_grads);
        if (trial_loss <= loss) {
          teacher = std::move(trial);
          grads = std::move(trial_grads);
          loss = trial_loss;
          break;
        }
        lr *= 0.5;
      }
      teacher.epoch_loss.push_back(loss);
    }
  } else {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      Rng shuffle_rng(derive_seed(config.seed, kTeacherEpoch, static_cast<std::uint64_t>(epoch)));
      shuffle_rng.shuffle(order);
      for (int start = 0; start < n; start += config.batch_size) {
        const int size = std::min(config.batch_size, n - start);
        Matrix batch(size, input_dim);
        std::vector<int> targets(static_cast<std::size_t>(size));
        for (int i = 0; i < size; ++i) {
          batch.row(i) = data.xs.row(order[static_cast<std::size_t>(start + i)]);
          targets[static_cast<std::size_t>(i)] =
              data.targets[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])];
        }
        forward_backward(teacher, batch, targets, grads);
        teacher.w1 -= lr * grads.gw1;
        teacher.b1 -= lr * grads.gb1;
        teacher.w2 -= lr * grads.gw2;
        teacher.b2 -= lr * grads.gb2;
      }
      teacher.epoch_loss.push_back(
          softmax_cross_entropy((extract_features(teacher, data.xs) * teacher.w2).rowwise() +
                                    teacher.b2.transpose(),
                                data.targets, nullptr));
    }
  }

  const Matrix logits = (extract_features(teacher, data.xs) * teacher.w2).rowwise() +
                        teacher.b2.transpose();
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    if (static_cast<int>(arg) == data.targets[static_cast<std::size_t>(i)]) ++correct;
  }
  teacher.train_accuracy = static_cast<double>(correct) / n;
  if (teacher.train_accuracy < config.min_accuracy) {
    throw NonConvergenceError("train_teacher: accuracy " +
                              format_double(teacher.train_accuracy) + " below gate " +
                              format_double(config.min_accuracy));
  }
  return teacher;
}

Teacher train_teacher(const World& world, int epochs, double learning_rate) {
  TeacherConfig config;
  config.epochs = epochs;
  config.learning_rate = learning_rate;
  config.seed = derive_seed(world.config.seed, kTeacherInit, 0xfeedULL);
  return train_teacher(world, config);
}

World build_world_with_features(const WorldConfig& config, bool oracle,
                                const TeacherConfig& teacher_config, Teacher* teacher_out) {
  if (oracle) {
    return generate_oracle_features(config);
  }
  World world = generate_world(config);
  TeacherConfig tc = teacher_config;
  tc.seed = derive_seed(config.seed, kTeacherInit, tc.seed);
  Teacher teacher = train_teacher(world, tc);
  materialize_features(world, teacher);
  if (teacher_out) *teacher_out = std::move(teacher);
  return world;
}

void materialize_features(World& world, const Teacher& teacher) {
  world.features = extract_features(teacher, world.raw_inputs());
  if (!world.head_instances.empty()) {
    Matrix head_xs(static_cast<Eigen::Index>(world.head_instances.size()),
                   world.head_instances.front().x.size());
    for (std::size_t i = 0; i < world.head_instances.size(); ++i) {
      head_xs.row(static_cast<Eigen::Index>(i)) = world.head_instances[i].x;
    }
    world.head_features = extract_features(teacher, head_xs);
  }
  world.has_features = true;
}

}  // namespace tlaudit
