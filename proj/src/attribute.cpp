#include "tlaudit/attribute.hpp"

#include "tlaudit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace tlaudit {

namespace {

enum Stream : std::uint64_t {
  kProbePick = 0x70726f62,   // "prob"
  kPoolSplit = 0x706f6f6c,   // "pool"
  kRepetition = 0x72657065,  // "repe"
  kHeadTrain = 0x68656164,   // "head"
};

// k indices sampled without replacement, proportionally per attribute value,
// with at least one of each value when k >= 2.
std::vector<int> stratified_sample(const std::vector<int>& indices,
                                   const std::vector<int>& attr_of, int k, Rng& rng) {
  std::vector<int> zeros, ones;
  for (int i : indices) {
    (attr_of[static_cast<std::size_t>(i)] != 0 ? ones : zeros).push_back(i);
  }
  if (zeros.empty() || ones.empty()) {
    throw SingleClassError("attribute_attack: sampling pool lacks one attribute value");
  }
  if (k > static_cast<int>(indices.size())) {
    throw ConfigError("attribute_attack: requested sample exceeds pool size");
  }
  rng.shuffle(zeros);
  rng.shuffle(ones);
  int take_ones = static_cast<int>(std::lround(
      static_cast<double>(k) * static_cast<double>(ones.size()) /
      static_cast<double>(indices.size())));
  take_ones = std::clamp(take_ones, k >= 2 ? 1 : 0, k - (k >= 2 ? 1 : 0));
  take_ones = std::min<int>(take_ones, static_cast<int>(ones.size()));
  int take_zeros = std::min<int>(k - take_ones, static_cast<int>(zeros.size()));
  take_ones = k - take_zeros;
  if (take_ones > static_cast<int>(ones.size())) {
    throw ConfigError("attribute_attack: pool too small for a stratified sample");
  }
  std::vector<int> out(zeros.begin(), zeros.begin() + take_zeros);
  out.insert(out.end(), ones.begin(), ones.begin() + take_ones);
  std::sort(out.begin(), out.end());
  return out;
}

struct AttributePools {
  std::vector<int> probe_ids;                  // verification comparison identities
  std::map<int, std::vector<int>> probe_rows;  // identity -> exemplar instance indices
  std::vector<int> aux_rows;                   // candidate instance indices
  std::vector<int> target_rows;
};

AttributePools build_pools(const World& world, const AttributeAttackConfig& config) {
  AttributePools pools;

  std::map<int, std::vector<int>> rows_of_identity;
  std::map<int, int> attr_of_identity;
  for (std::size_t i = 0; i < world.instances.size(); ++i) {
    rows_of_identity[world.instances[i].y1].push_back(static_cast<int>(i));
    attr_of_identity[world.instances[i].y1] = world.instances[i].s;
  }

  std::vector<int> ids0, ids1;
  for (const auto& [id, s] : attr_of_identity) (s != 0 ? ids1 : ids0).push_back(id);

  if (config.surface == Surface::Verification) {
    if (config.n_probes < 1) {
      throw ConfigError("attribute_attack: verification surface needs at least one probe");
    }
    Rng probe_rng(derive_seed(config.seed, kProbePick));
    probe_rng.shuffle(ids0);
    probe_rng.shuffle(ids1);
    // Alternate attribute values so any prefix of the probe list stays
    // near-balanced.
    std::size_t p0 = 0, p1 = 0;
    for (int p = 0; p < config.n_probes; ++p) {
      const bool take_one = (p % 2 == 1 && p1 < ids1.size()) || p0 >= ids0.size();
      if (take_one && p1 < ids1.size()) {
        pools.probe_ids.push_back(ids1[p1++]);
      } else if (p0 < ids0.size()) {
        pools.probe_ids.push_back(ids0[p0++]);
      } else {
        throw ConfigError("attribute_attack: not enough identities for the probe set");
      }
    }
    for (int id : pools.probe_ids) {
      const auto& rows = rows_of_identity[id];
      const int take = std::min<int>(std::max(config.exemplars_per_probe, 1),
                                     static_cast<int>(rows.size()));
      pools.probe_rows[id] = std::vector<int>(rows.begin(), rows.begin() + take);
    }
  }

  // Aux and target draw from identity-disjoint halves; probe identities are
  // excluded from both.
  std::vector<int> eligible;
  for (const auto& [id, rows] : rows_of_identity) {
    (void)rows;
    if (std::find(pools.probe_ids.begin(), pools.probe_ids.end(), id) == pools.probe_ids.end()) {
      eligible.push_back(id);
    }
  }
  std::vector<int> elig0, elig1;
  for (int id : eligible) (attr_of_identity[id] != 0 ? elig1 : elig0).push_back(id);
  Rng split_rng(derive_seed(config.seed, kPoolSplit));
  split_rng.shuffle(elig0);
  split_rng.shuffle(elig1);
  auto deal = [&](const std::vector<int>& ids) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto& rows = rows_of_identity[ids[i]];
      auto& dest = (i % 2 == 0) ? pools.aux_rows : pools.target_rows;
      dest.insert(dest.end(), rows.begin(), rows.end());
    }
  };
  deal(elig0);
  deal(elig1);
  std::sort(pools.aux_rows.begin(), pools.aux_rows.end());
  std::sort(pools.target_rows.begin(), pools.target_rows.end());
  return pools;
}

}  // namespace

AttributeReport attribute_attack(const StudentApis& apis, const AttributeAttackConfig& config) {
  if (config.aux_size < 2) throw ConfigError("attribute_attack: aux_size must be at least 2");
  if (config.target_size < 2) throw ConfigError("attribute_attack: target_size must be at least 2");
  if (config.repetitions < 1) throw ConfigError("attribute_attack: repetitions must be at least 1");

  const World& world = apis.world();
  const AttributePools pools = build_pools(world, config);

  // The recognition surface may need a head of a different width than the one
  // attached to the API set.
  std::optional<StudentApis> local_apis;
  const StudentApis* active = &apis;
  if (config.surface == Surface::Recognition) {
    const bool reuse = apis.has_recognition() &&
                       static_cast<int>(apis.recognition_student().head_classes.size()) ==
                           config.head_class_count;
    if (!reuse) {
      FinetuneConfig head_config;
      head_config.seed = derive_seed(config.seed, kHeadTrain,
                                     static_cast<std::uint64_t>(config.head_class_count));
      local_apis.emplace(world, make_recognition_student(world, config.head_class_count, head_config),
                         apis.defense());
      active = &*local_apis;
    }
  }

  std::vector<int> attr_of(world.instances.size());
  for (std::size_t i = 0; i < world.instances.size(); ++i) attr_of[i] = world.instances[i].s;

  auto observe = [&](const std::vector<int>& rows) {
    Matrix X;
    std::vector<int> labels;
    labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      Vector v;
      switch (config.surface) {
        case Surface::Feature:
          v = active->feature(rows[r]);
          break;
        case Surface::Verification: {
          v.resize(static_cast<Eigen::Index>(pools.probe_ids.size()));
          for (std::size_t p = 0; p < pools.probe_ids.size(); ++p) {
            const auto& exemplars = pools.probe_rows.at(pools.probe_ids[p]);
            double sum = 0.0;
            for (int e : exemplars) sum += active->verify(rows[r], e);
            v[static_cast<Eigen::Index>(p)] = sum / static_cast<double>(exemplars.size());
          }
          break;
        }
        case Surface::Recognition:
          v = active->recognition(rows[r]);
          break;
      }
      if (r == 0) X.resize(static_cast<Eigen::Index>(rows.size()), v.size());
      X.row(static_cast<Eigen::Index>(r)) = v;
      labels.push_back(attr_of[static_cast<std::size_t>(rows[r])]);
    }
    return std::make_pair(std::move(X), std::move(labels));
  };

  AttributeReport report;
  report.surface = surface_name(config.surface);
  report.seed = config.seed;

  for (int rep = 0; rep < config.repetitions; ++rep) {
    Rng rng(derive_seed(config.seed, kRepetition, static_cast<std::uint64_t>(rep)));
    const std::vector<int> aux_rows = stratified_sample(pools.aux_rows, attr_of,
                                                        config.aux_size, rng);
    const std::vector<int> target_rows = stratified_sample(pools.target_rows, attr_of,
                                                           config.target_size, rng);
    auto [aux_X, aux_y] = observe(aux_rows);
    auto [target_X, target_y] = observe(target_rows);

    ClassifierConfig classifier_config;
    classifier_config.logistic.l2 = 1e-2;  // aux can be as small as a few dozen rows
    classifier_config.forest.seed = derive_seed(config.seed, kRepetition + 1,
                                                static_cast<std::uint64_t>(rep));
    const FittedClassifier model =
        FittedClassifier::fit(config.classifier, aux_X, aux_y, classifier_config);

    const std::vector<int> preds = model.predict(target_X);
    int correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == target_y[i];
    report.fold_accuracies.push_back(static_cast<double>(correct) /
                                     static_cast<double>(preds.size()));
    const Vector scores = model.scores(target_X);
    report.fold_aucs.push_back(
        roc_curve(std::vector<double>(scores.data(), scores.data() + scores.size()), target_y)
            .auc);
  }

  report.accuracy = std::accumulate(report.fold_accuracies.begin(), report.fold_accuracies.end(),
                                    0.0) /
                    static_cast<double>(report.fold_accuracies.size());
  report.auc = std::accumulate(report.fold_aucs.begin(), report.fold_aucs.end(), 0.0) /
               static_cast<double>(report.fold_aucs.size());
  return report;
}

std::vector<AttributeReport> sweep_attribute_attack(const StudentApis& apis,
                                                    const AttributeAttackConfig& base,
                                                    AttributeSweepVariable variable,
                                                    const std::vector<double>& values) {
  std::vector<AttributeReport> reports;
  reports.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    AttributeAttackConfig config = base;
    config.seed = derive_seed(base.seed, 0x73776570ULL, i);  // "swep"
    std::string name;
    switch (variable) {
      case AttributeSweepVariable::AuxSize:
        config.aux_size = static_cast<int>(values[i]);
        name = "aux_size";
        break;
      case AttributeSweepVariable::ProbeCount:
        config.n_probes = static_cast<int>(values[i]);
        name = "probe_count";
        break;
      case AttributeSweepVariable::HeadClassCount:
        config.head_class_count = static_cast<int>(values[i]);
        name = "head_class_count";
        break;
    }
    AttributeReport report = attribute_attack(apis, config);
    report.sweep_variable = name;
    report.sweep_value = values[i];
    reports.push_back(std::move(report));
  }
  return reports;
}

}  // namespace tlaudit
