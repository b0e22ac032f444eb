#include "tlaudit/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>

namespace tlaudit {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("evaluation.seeds: must not be empty");
  if (folds < 2) throw ConfigError("evaluation.folds: must be at least 2");
  if (jobs < 1) throw ConfigError("jobs: must be at least 1");
  if (world_source == WorldSource::Import && import_path.empty()) {
    throw ConfigError("world.path: required for an imported world");
  }
  if (world_source != WorldSource::Import) world.validate();
  if (attacks.empty() && attribute_attacks.empty()) {
    throw ConfigError("attacks: nothing to run");
  }
  for (const auto& attack : attacks) {
    if (attack.family != "firstcut" && attack.family != "class-ranking-summary" &&
        attack.family != "class-ranking-gmm" && attack.family != "class-supervised") {
      throw ConfigError("attacks.family: unknown family " + attack.family);
    }
  }
}

namespace {

template <typename T>
T field_or(const json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config field '" + key + "' has the wrong type");
  }
}

WorldConfig parse_world_params(const json& obj) {
  WorldConfig config;
  config.input_dim = field_or(obj, "input_dim", config.input_dim);
  config.feature_dim = field_or(obj, "feature_dim", config.feature_dim);
  config.n_member_classes = field_or(obj, "n_member_classes", config.n_member_classes);
  config.n_nonmember_classes = field_or(obj, "n_nonmember_classes", config.n_nonmember_classes);
  config.images_per_class = field_or(obj, "images_per_class", config.images_per_class);
  config.class_spread = field_or(obj, "class_spread", config.class_spread);
  config.center_spread = field_or(obj, "center_spread", config.center_spread);
  config.n_boost_dims = field_or(obj, "n_boost_dims", config.n_boost_dims);
  config.boost_factor = field_or(obj, "boost_factor", config.boost_factor);
  config.concentration_gap = field_or(obj, "concentration_gap", config.concentration_gap);
  config.spread_heterogeneity =
      field_or(obj, "spread_heterogeneity", config.spread_heterogeneity);
  config.attribute_balance = field_or(obj, "attribute_balance", config.attribute_balance);
  config.attribute_shift = field_or(obj, "attribute_shift", config.attribute_shift);
  config.nuisance_rank = field_or(obj, "nuisance_rank", config.nuisance_rank);
  config.nuisance_scale = field_or(obj, "nuisance_scale", config.nuisance_scale);
  config.instance_gain_log_sd =
      field_or(obj, "instance_gain_log_sd", config.instance_gain_log_sd);
  config.n_head_classes = field_or(obj, "n_head_classes", config.n_head_classes);
  config.head_images_per_class = field_or(obj, "head_images_per_class", config.head_images_per_class);
  config.head_center_factor = field_or(obj, "head_center_factor", config.head_center_factor);
  config.seed = field_or(obj, "seed", config.seed);
  return config;
}

json world_params_to_json(const WorldConfig& c) {
  return json{{"input_dim", c.input_dim},
              {"feature_dim", c.feature_dim},
              {"n_member_classes", c.n_member_classes},
              {"n_nonmember_classes", c.n_nonmember_classes},
              {"images_per_class", c.images_per_class},
              {"class_spread", c.class_spread},
              {"center_spread", c.center_spread},
              {"n_boost_dims", c.n_boost_dims},
              {"boost_factor", c.boost_factor},
              {"concentration_gap", c.concentration_gap},
              {"spread_heterogeneity", c.spread_heterogeneity},
              {"attribute_balance", c.attribute_balance},
              {"attribute_shift", c.attribute_shift},
              {"nuisance_rank", c.nuisance_rank},
              {"nuisance_scale", c.nuisance_scale},
              {"instance_gain_log_sd", c.instance_gain_log_sd},
              {"n_head_classes", c.n_head_classes},
              {"head_images_per_class", c.head_images_per_class},
              {"head_center_factor", c.head_center_factor},
              {"seed", c.seed}};
}

ScoreOrientation parse_orientation(const std::string& name) {
  if (name == "member_low") return ScoreOrientation::MemberLow;
  if (name == "member_high") return ScoreOrientation::MemberHigh;
  throw ConfigError("attacks.orientation: expected member_low or member_high, got " + name);
}

DistanceStatistic parse_statistic(const std::string& name) {
  if (name == "mean") return DistanceStatistic::Mean;
  if (name == "median") return DistanceStatistic::Median;
  if (name == "variance") return DistanceStatistic::Variance;
  if (name == "mad") return DistanceStatistic::MeanAbsDev;
  if (name == "median-ad") return DistanceStatistic::MedianAbsDev;
  if (name == "iqr") return DistanceStatistic::Iqr;
  throw ConfigError("attacks.statistic: unknown statistic " + name);
}

std::vector<AttackSpec> parse_attack(const json& obj, int default_folds) {
  AttackSpec base;
  base.family = field_or<std::string>(obj, "family", "class-ranking-summary");
  base.surface = surface_from_name(field_or<std::string>(obj, "surface", "feature"));
  base.folds = field_or(obj, "folds", default_folds);
  base.classifier = classifier_kind_from_name(field_or<std::string>(
      obj, "classifier", base.family == "class-supervised" ? "qda" : "logistic"));
  base.ranking.params.rho = field_or(obj, "rho", 1.0);
  base.ranking.params.lambda = field_or(obj, "lambda", 1.0);
  base.ranking.orientation =
      parse_orientation(field_or<std::string>(obj, "orientation", "member_low"));
  base.ranking.statistic = parse_statistic(field_or<std::string>(obj, "statistic", "mean"));
  base.ranking.gmm_total_likelihood = field_or(obj, "gmm_total_likelihood", false);

  std::vector<double> rho_grid = field_or(obj, "rho_grid", std::vector<double>{});
  std::vector<double> lambda_grid = field_or(obj, "lambda_grid", std::vector<double>{});
  if (rho_grid.empty() && lambda_grid.empty()) return {base};
  if (rho_grid.empty()) rho_grid = {base.ranking.params.rho};
  if (lambda_grid.empty()) lambda_grid = {base.ranking.params.lambda};
  std::vector<AttackSpec> expanded;
  for (double rho : rho_grid) {
    for (double lambda : lambda_grid) {
      AttackSpec spec = base;
      spec.ranking.params.rho = rho;
      spec.ranking.params.lambda = lambda;
      expanded.push_back(spec);
    }
  }
  return expanded;
}

DefenseSpec parse_defense(const json& obj) {
  const std::string kind = field_or<std::string>(obj, "kind", "none");
  if (kind == "none") return DefenseSpec::none();
  if (kind == "randomize") return DefenseSpec::randomize(field_or(obj, "eta", 1.0), 0);
  if (kind == "round") return DefenseSpec::round(field_or(obj, "sig_figs", 1));
  if (kind == "topk") return DefenseSpec::topk(field_or(obj, "keep_k", 1));
  throw ConfigError("defenses.kind: unknown kind " + kind);
}

AttributeAttackEntry parse_attribute_attack(const json& obj) {
  AttributeAttackEntry entry;
  entry.config.surface = surface_from_name(field_or<std::string>(obj, "surface", "feature"));
  entry.config.aux_size = field_or(obj, "aux_size", entry.config.aux_size);
  entry.config.target_size = field_or(obj, "target_size", entry.config.target_size);
  entry.config.n_probes = field_or(obj, "probes", entry.config.n_probes);
  entry.config.exemplars_per_probe =
      field_or(obj, "exemplars_per_probe", entry.config.exemplars_per_probe);
  entry.config.head_class_count = field_or(obj, "head_class_count", entry.config.head_class_count);
  entry.config.classifier =
      classifier_kind_from_name(field_or<std::string>(obj, "classifier", "logistic"));
  entry.config.repetitions = field_or(obj, "repetitions", entry.config.repetitions);
  if (obj.contains("sweep")) {
    const json& sweep = obj.at("sweep");
    entry.sweep_variable = field_or<std::string>(sweep, "variable", "");
    entry.sweep_values = field_or(sweep, "values", std::vector<double>{});
    if (entry.sweep_variable.empty() || entry.sweep_values.empty()) {
      throw ConfigError("attribute_attacks.sweep: needs variable and values");
    }
  }
  return entry;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  ExperimentConfig config;
  if (doc.contains("world")) {
    const json& world = doc.at("world");
    const std::string type = field_or<std::string>(world, "type", "oracle");
    if (type == "oracle") config.world_source = ExperimentConfig::WorldSource::Oracle;
    else if (type == "trained") config.world_source = ExperimentConfig::WorldSource::Trained;
    else if (type == "import") config.world_source = ExperimentConfig::WorldSource::Import;
    else throw ConfigError("world.type: expected oracle, trained, or import, got " + type);
    if (world.contains("params")) config.world = parse_world_params(world.at("params"));
    config.import_path = field_or<std::string>(world, "path", "");
    config.head_classes_from_import =
        field_or(world, "head_classes_from_import", config.head_classes_from_import);
    if (world.contains("teacher")) {
      const json& teacher = world.at("teacher");
      config.teacher.epochs = field_or(teacher, "epochs", config.teacher.epochs);
      config.teacher.learning_rate = field_or(teacher, "learning_rate", config.teacher.learning_rate);
      config.teacher.batch_size = field_or(teacher, "batch_size", config.teacher.batch_size);
      config.teacher.min_accuracy = field_or(teacher, "min_accuracy", config.teacher.min_accuracy);
    }
  }

  if (doc.contains("evaluation")) {
    const json& eval = doc.at("evaluation");
    config.folds = field_or(eval, "folds", config.folds);
    config.seeds = field_or(eval, "seeds", config.seeds);
  }

  if (doc.contains("attacks")) {
    for (const json& entry : doc.at("attacks")) {
      const auto expanded = parse_attack(entry, config.folds);
      config.attacks.insert(config.attacks.end(), expanded.begin(), expanded.end());
    }
  }
  if (doc.contains("attribute_attacks")) {
    for (const json& entry : doc.at("attribute_attacks")) {
      config.attribute_attacks.push_back(parse_attribute_attack(entry));
    }
  }
  if (doc.contains("defenses")) {
    for (const json& entry : doc.at("defenses")) {
      config.defenses.push_back(parse_defense(entry));
    }
  }
  if (doc.contains("topk_counter")) {
    const std::string strategy = doc.at("topk_counter").get<std::string>();
    if (strategy == "truncated") config.counter = TopkCounterStrategy::TruncatedK;
    else if (strategy == "zerofill") config.counter = TopkCounterStrategy::ZerofillC;
    else throw ConfigError("topk_counter: expected truncated or zerofill, got " + strategy);
  }

  config.head_classes = field_or(doc, "head_classes", config.head_classes);
  config.output_dir = field_or<std::string>(doc, "output_dir", config.output_dir);
  config.plots = field_or(doc, "plots", config.plots);
  config.jobs = field_or(doc, "jobs", config.jobs);
  config.validate();
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

namespace {

json experiment_config_to_json(const ExperimentConfig& config) {
  json attacks = json::array();
  for (const auto& a : config.attacks) {
    attacks.push_back({{"family", a.family},
                       {"surface", surface_name(a.surface)},
                       {"classifier", classifier_kind_name(a.classifier)},
                       {"folds", a.folds},
                       {"rho", a.ranking.params.rho},
                       {"lambda", a.ranking.params.lambda},
                       {"orientation", a.ranking.orientation == ScoreOrientation::MemberLow
                                           ? "member_low"
                                           : "member_high"}});
  }
  json defenses = json::array();
  for (const auto& d : config.defenses) {
    defenses.push_back({{"kind", d.label()}, {"param", d.param_label()}});
  }
  json attribute = json::array();
  for (const auto& e : config.attribute_attacks) {
    attribute.push_back({{"surface", surface_name(e.config.surface)},
                         {"aux_size", e.config.aux_size},
                         {"target_size", e.config.target_size},
                         {"probes", e.config.n_probes},
                         {"head_class_count", e.config.head_class_count},
                         {"repetitions", e.config.repetitions},
                         {"sweep_variable", e.sweep_variable},
                         {"sweep_values", e.sweep_values}});
  }
  const char* source = config.world_source == ExperimentConfig::WorldSource::Oracle ? "oracle"
                       : config.world_source == ExperimentConfig::WorldSource::Trained
                           ? "trained"
                           : "import";
  return json{{"world",
               {{"type", source},
                {"params", world_params_to_json(config.world)},
                {"path", config.import_path}}},
              {"attacks", attacks},
              {"attribute_attacks", attribute},
              {"defenses", defenses},
              {"evaluation", {{"folds", config.folds}, {"seeds", config.seeds}}},
              {"head_classes", config.head_classes},
              {"output_dir", config.output_dir},
              {"plots", config.plots},
              {"jobs", config.jobs}};
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') {
      c = '_';
    }
  }
  return s;
}

World carve_import_head(World world, int head_classes) {
  if (head_classes <= 0) return world;
  if (static_cast<int>(world.nonmember_ids.size()) <= head_classes) {
    throw ConfigError("head_classes_from_import: not enough non-member identities to carve");
  }
  std::vector<int> head_ids(world.nonmember_ids.end() - head_classes, world.nonmember_ids.end());
  world.nonmember_ids.resize(world.nonmember_ids.size() - static_cast<std::size_t>(head_classes));

  std::vector<Instance> kept, head;
  std::vector<int> kept_rows, head_rows;
  for (std::size_t i = 0; i < world.instances.size(); ++i) {
    const bool is_head = std::find(head_ids.begin(), head_ids.end(), world.instances[i].y1) !=
                         head_ids.end();
    (is_head ? head : kept).push_back(world.instances[i]);
    (is_head ? head_rows : kept_rows).push_back(static_cast<int>(i));
  }
  auto gather = [&](const std::vector<int>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), world.features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.row(static_cast<Eigen::Index>(i)) = world.features.row(rows[i]);
    }
    return out;
  };
  world.head_features = gather(head_rows);
  world.features = gather(kept_rows);
  world.instances = std::move(kept);
  world.head_instances = std::move(head);
  world.head_ids = std::move(head_ids);
  world.config.n_nonmember_classes = static_cast<int>(world.nonmember_ids.size());
  world.config.n_head_classes = static_cast<int>(world.head_ids.size());
  return world;
}

struct SeedResult {
  std::vector<SummaryRow> rows;
  std::vector<std::pair<std::string, std::string>> roc_files;  // name, contents
  std::vector<std::string> attribute_lines;                    // rows for the attribute CSV
};

}  // namespace

std::string summary_to_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << "attack,surface,mode,defense,param,fold,auc,precision,recall,f1,seed\n";
  for (const auto& r : rows) {
    out << r.attack << ',' << r.surface << ',' << r.mode << ',' << r.defense << ',' << r.param
        << ',' << r.fold << ',' << format_double(r.auc) << ',' << format_double(r.precision)
        << ',' << format_double(r.recall) << ',' << format_double(r.f1) << ',' << r.seed << '\n';
  }
  return out.str();
}

std::string roc_svg(const RocResult& roc, const std::string& title) {
  std::ostringstream out;
  const int size = 420, margin = 40, plot = size - 2 * margin;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << " " << size << "\">\n";
  out << "<rect width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << size - margin << "\" x2=\"" << size - margin
      << "\" y2=\"" << margin << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"4\"/>\n";
  out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot << "\" height=\""
      << plot << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
  for (const auto& p : roc.points) {
    const double x = margin + p.fpr * plot;
    const double y = size - margin - p.tpr * plot;
    out << format_double(x) << ',' << format_double(y) << ' ';
  }
  out << "\"/>\n";
  out << "<text x=\"" << margin << "\" y=\"" << margin - 10 << "\" font-size=\"13\">" << title
      << " (AUC " << format_double(roc.auc) << ")</text>\n";
  out << "<text x=\"" << size / 2 - 10 << "\" y=\"" << size - 8 << "\" font-size=\"12\">FPR</text>\n";
  out << "<text x=\"8\" y=\"" << size / 2 << "\" font-size=\"12\">TPR</text>\n";
  out << "</svg>\n";
  return out.str();
}

void export_instances(const World& world, const std::string& path) {
  if (!world.has_features) throw ConfigError("export_instances: features not materialized");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("export_instances: cannot open " + path + " for writing");
  const int k = static_cast<int>(world.features.cols());
  out << "id,class,member,attr";
  for (int j = 0; j < k; ++j) out << ",f" << j;
  out << '\n';
  for (std::size_t i = 0; i < world.instances.size(); ++i) {
    const Instance& inst = world.instances[i];
    out << inst.id << ',' << inst.y1 << ',' << inst.y2 << ',' << inst.s;
    for (int j = 0; j < k; ++j) {
      out << ',' << format_double(world.features(static_cast<Eigen::Index>(i), j));
    }
    out << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

World import_instances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("import_instances: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("import_instances: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_csv_line(line);
  const std::vector<std::string> fixed = {"id", "class", "member", "attr"};
  if (header.size() < 5) {
    throw SchemaError("import_instances: header has " + std::to_string(header.size()) +
                      " columns, expected at least 5 (id,class,member,attr,f0,...)");
  }
  for (std::size_t i = 0; i < fixed.size(); ++i) {
    if (header[i] != fixed[i]) {
      throw SchemaError("import_instances: header column " + std::to_string(i) + " expected '" +
                        fixed[i] + "', found '" + header[i] + "'");
    }
  }
  const int k = static_cast<int>(header.size()) - 4;
  for (int j = 0; j < k; ++j) {
    const std::string expected = "f" + std::to_string(j);
    if (header[static_cast<std::size_t>(4 + j)] != expected) {
      throw SchemaError("import_instances: header column " + std::to_string(4 + j) +
                        " expected '" + expected + "', found '" +
                        header[static_cast<std::size_t>(4 + j)] + "'");
    }
  }

  World world;
  std::vector<Vector> feature_rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw SchemaError("import_instances: row " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " columns, expected " +
                        std::to_string(header.size()));
    }
    auto parse_int = [&](std::size_t col) {
      try {
        std::size_t pos = 0;
        const int v = std::stoi(cells[col], &pos);
        if (pos != cells[col].size()) throw std::invalid_argument("trailing characters");
        return v;
      } catch (const std::exception&) {
        throw SchemaError("import_instances: row " + std::to_string(line_no) + " column " +
                          std::to_string(col) + " ('" + cells[col] + "') is not an integer");
      }
    };
    Instance inst;
    inst.id = parse_int(0);
    inst.y1 = parse_int(1);
    inst.y2 = parse_int(2);
    inst.s = parse_int(3);
    if (inst.y2 != 0 && inst.y2 != 1) {
      throw SchemaError("import_instances: row " + std::to_string(line_no) +
                        ": member must be 0 or 1");
    }
    if (inst.s != 0 && inst.s != 1) {
      throw SchemaError("import_instances: row " + std::to_string(line_no) +
                        ": attr must be 0 or 1");
    }
    Vector f(k);
    for (int j = 0; j < k; ++j) {
      const std::string& cell = cells[static_cast<std::size_t>(4 + j)];
      char* end = nullptr;
      f[j] = std::strtod(cell.c_str(), &end);
      if (end != cell.c_str() + cell.size() || cell.empty() || !std::isfinite(f[j])) {
        throw SchemaError("import_instances: row " + std::to_string(line_no) + " column " +
                          std::to_string(4 + j) + " ('" + cell + "') is not a finite number");
      }
    }
    world.instances.push_back(std::move(inst));
    feature_rows.push_back(std::move(f));
  }
  if (world.instances.empty()) throw SchemaError("import_instances: no instance rows");

  std::map<int, int> count_of_identity;
  std::map<int, int> member_of_identity;
  for (const auto& inst : world.instances) {
    ++count_of_identity[inst.y1];
    const auto it = member_of_identity.find(inst.y1);
    if (it == member_of_identity.end()) {
      member_of_identity[inst.y1] = inst.y2;
    } else if (it->second != inst.y2) {
      throw SchemaError("import_instances: identity " + std::to_string(inst.y1) +
                        " has inconsistent member flags");
    }
  }
  for (const auto& [id, count] : count_of_identity) {
    if (count < 2) {
      throw SchemaError("import_instances: identity " + std::to_string(id) + " has " +
                        std::to_string(count) + " instance; at least 2 are required");
    }
  }

  world.features.resize(static_cast<Eigen::Index>(feature_rows.size()), k);
  for (std::size_t i = 0; i < feature_rows.size(); ++i) {
    world.features.row(static_cast<Eigen::Index>(i)) = feature_rows[i];
  }
  world.has_features = true;
  int min_count = std::numeric_limits<int>::max();
  for (const auto& [id, m] : member_of_identity) {
    (m != 0 ? world.member_ids : world.nonmember_ids).push_back(id);
    min_count = std::min(min_count, count_of_identity[id]);
  }
  world.config.feature_dim = k;
  world.config.input_dim = k;
  world.config.n_member_classes = static_cast<int>(world.member_ids.size());
  world.config.n_nonmember_classes = static_cast<int>(world.nonmember_ids.size());
  world.config.images_per_class = min_count;
  world.config.n_head_classes = 0;
  world.config.head_images_per_class = 0;
  return world;
}

namespace {

SeedResult run_seed(const ExperimentConfig& config, const World* imported, std::uint64_t seed) {
  SeedResult result;

  World world;
  switch (config.world_source) {
    case ExperimentConfig::WorldSource::Oracle: {
      WorldConfig wc = config.world;
      wc.seed = seed;
      world = generate_oracle_features(wc);
      break;
    }
    case ExperimentConfig::WorldSource::Trained: {
      WorldConfig wc = config.world;
      wc.seed = seed;
      world = build_world_with_features(wc, /*oracle=*/false, config.teacher);
      break;
    }
    case ExperimentConfig::WorldSource::Import:
      world = *imported;
      break;
  }

  bool needs_recognition = false;
  for (const auto& a : config.attacks) {
    needs_recognition |= a.surface == Surface::Recognition;
  }
  for (const auto& e : config.attribute_attacks) {
    needs_recognition |= e.config.surface == Surface::Recognition;
  }
  std::optional<RecognitionStudent> student;
  if (needs_recognition) {
    FinetuneConfig head_config;
    head_config.seed = derive_seed(seed, 0x68656164ULL);  // "head"
    student = make_recognition_student(world, config.head_classes, head_config);
  }

  std::vector<DefenseSpec> chains;
  chains.push_back(DefenseSpec::none());
  chains.insert(chains.end(), config.defenses.begin(), config.defenses.end());

  for (const auto& attack : config.attacks) {
    for (std::size_t d = 0; d < chains.size(); ++d) {
      DefenseSpec spec = chains[d];
      if (spec.kind == DefenseKind::Randomize) spec.seed = derive_seed(seed, 0x64656673ULL, d);
      if (spec.kind == DefenseKind::TopK && attack.surface != Surface::Recognition) {
        continue;  // top-k exists only on the recognition surface
      }
      DefenseChain chain = spec.kind == DefenseKind::None
                               ? DefenseChain()
                               : DefenseChain(std::vector<DefenseSpec>{spec});
      const StudentApis apis = student ? StudentApis(world, *student, std::move(chain))
                                       : StudentApis(world, std::move(chain));
      const auto groups = collect_class_groups(apis, attack.surface, nullptr, config.counter);
      const AttackReport report = run_attack(groups, attack, seed);

      SummaryRow base;
      base.attack = report.attack;
      base.surface = report.surface;
      base.mode = report.mode;
      base.defense = spec.label();
      base.param = spec.param_label();
      base.precision = report.best_f1_metrics.precision;
      base.recall = report.best_f1_metrics.recall;
      base.f1 = report.best_f1_metrics.f1;
      base.seed = seed;
      if (report.fold_aucs.empty()) {
        base.fold = 0;
        base.auc = report.auc;
        result.rows.push_back(base);
      } else {
        for (std::size_t f = 0; f < report.fold_aucs.size(); ++f) {
          SummaryRow row = base;
          row.fold = static_cast<int>(f);
          row.auc = report.fold_aucs[f];
          result.rows.push_back(row);
        }
      }

      const std::string roc_name = sanitize("roc_" + report.attack + "_" + report.surface + "_" +
                                            spec.label() +
                                            (spec.param_label().empty() ? "" : "_" + spec.param_label()) +
                                            "_s" + std::to_string(seed)) +
                                   ".csv";
      result.roc_files.emplace_back(roc_name, roc_to_csv(report.roc));
    }
  }

  for (const auto& entry : config.attribute_attacks) {
    const StudentApis apis = student ? StudentApis(world, *student) : StudentApis(world);
    AttributeAttackConfig ac = entry.config;
    ac.seed = seed;
    std::vector<AttributeReport> reports;
    if (entry.sweep_variable.empty()) {
      reports.push_back(attribute_attack(apis, ac));
      reports.back().sweep_variable = "none";
    } else {
      AttributeSweepVariable variable;
      if (entry.sweep_variable == "aux_size") variable = AttributeSweepVariable::AuxSize;
      else if (entry.sweep_variable == "probe_count") variable = AttributeSweepVariable::ProbeCount;
      else if (entry.sweep_variable == "head_class_count")
        variable = AttributeSweepVariable::HeadClassCount;
      else
        throw ConfigError("attribute sweep variable must be aux_size, probe_count, or "
                          "head_class_count");
      reports = sweep_attribute_attack(apis, ac, variable, entry.sweep_values);
    }
    for (const auto& rep : reports) {
      const double value = rep.sweep_variable == "none" ? 0.0 : rep.sweep_value;
      for (std::size_t f = 0; f < rep.fold_accuracies.size(); ++f) {
        std::ostringstream row;
        row << rep.surface << ':' << rep.sweep_variable << ',' << format_double(value) << ','
            << f << ',' << format_double(rep.fold_accuracies[f]) << ','
            << format_double(rep.fold_aucs[f]);
        result.attribute_lines.push_back(row.str());
      }
    }
  }

  return result;
}

}  // namespace

ReportBundle run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();

  World imported;
  if (config.world_source == ExperimentConfig::WorldSource::Import) {
    imported = carve_import_head(import_instances(config.import_path),
                                 config.head_classes_from_import);
  }

  fs::create_directories(config.output_dir);

  std::vector<SeedResult> results(config.seeds.size());
  std::atomic<std::size_t> next{0};
  const int workers = std::min<int>(config.jobs, static_cast<int>(config.seeds.size()));
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= config.seeds.size()) return;
      results[i] = run_seed(config, &imported, config.seeds[i]);
    }
  };
  try {
    if (workers <= 1) {
      worker();
    } else {
      std::vector<std::future<void>> futures;
      for (int w = 0; w < workers; ++w) futures.push_back(std::async(std::launch::async, worker));
      for (auto& f : futures) f.get();
    }
  } catch (const std::exception& e) {
    // Stage failures still leave a manifest behind for diagnosis.
    json manifest;
    manifest["version"] = kToolkitVersion;
    manifest["config"] = experiment_config_to_json(config);
    manifest["stages"] = json::array({{{"name", "attacks"}, {"status", "error"},
                                       {"message", e.what()}}});
    std::ofstream out(fs::path(config.output_dir) / "manifest.json", std::ios::binary);
    out << manifest.dump(2) << '\n';
    throw;
  }
  const auto t_attacks = std::chrono::steady_clock::now();

  ReportBundle bundle;
  std::vector<std::string> attribute_lines;
  for (const auto& result : results) {
    bundle.summary.insert(bundle.summary.end(), result.rows.begin(), result.rows.end());
    attribute_lines.insert(attribute_lines.end(), result.attribute_lines.begin(),
                           result.attribute_lines.end());
  }

  auto write_file = [&](const std::string& name, const std::string& contents) {
    const fs::path path = fs::path(config.output_dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SchemaError("run_experiment: cannot write " + path.string());
    out << contents;
    bundle.files_written.push_back(path.string());
  };

  write_file("summary.csv", summary_to_csv(bundle.summary));
  for (const auto& result : results) {
    for (const auto& [name, contents] : result.roc_files) {
      write_file(name, contents);
      if (config.plots) {
        RocResult roc;
        std::istringstream in(contents);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
          const auto cells = split_csv_line(line);
          roc.points.push_back({std::atof(cells[0].c_str()), std::atof(cells[1].c_str()),
                                std::atof(cells[2].c_str())});
        }
        for (std::size_t p = 1; p < roc.points.size(); ++p) {
          roc.auc += (roc.points[p].fpr - roc.points[p - 1].fpr) *
                     (roc.points[p].tpr + roc.points[p - 1].tpr) / 2.0;
        }
        write_file(name.substr(0, name.size() - 4) + ".svg", roc_svg(roc, name));
      }
    }
  }
  if (!attribute_lines.empty()) {
    std::ostringstream out;
    out << "sweep_var,value,fold,accuracy,auc\n";
    for (const auto& line : attribute_lines) out << line << '\n';
    write_file("attribute.csv", out.str());
  }
  const auto t_report = std::chrono::steady_clock::now();

  json manifest;
  manifest["version"] = kToolkitVersion;
  manifest["timestamp_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  manifest["config"] = experiment_config_to_json(config);
  manifest["stages"] = json::array(
      {{{"name", "attacks"},
        {"millis", std::chrono::duration_cast<std::chrono::milliseconds>(t_attacks - t_start).count()}},
       {{"name", "reporting"},
        {"millis",
         std::chrono::duration_cast<std::chrono::milliseconds>(t_report - t_attacks).count()}}});
  manifest["files"] = bundle.files_written;
  const fs::path manifest_path = fs::path(config.output_dir) / "manifest.json";
  std::ofstream manifest_out(manifest_path, std::ios::binary);
  manifest_out << manifest.dump(2) << '\n';
  bundle.manifest_path = manifest_path.string();
  return bundle;
}

void render_report(const std::string& out_dir, bool plots) {
  const fs::path dir(out_dir);
  if (!fs::exists(dir / "manifest.json")) {
    throw ConfigError("render_report: no manifest.json in " + out_dir);
  }
  const fs::path summary_path = dir / "summary.csv";
  if (fs::exists(summary_path)) {
    std::ifstream in(summary_path);
    std::cout << in.rdbuf();
  }
  if (!plots) return;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("roc_", 0) != 0 || entry.path().extension() != ".csv") continue;
    std::ifstream in(entry.path());
    std::string line;
    std::getline(in, line);
    RocResult roc;
    while (std::getline(in, line)) {
      const auto cells = split_csv_line(line);
      if (cells.size() != 3) continue;
      roc.points.push_back(
          {std::atof(cells[0].c_str()), std::atof(cells[1].c_str()), std::atof(cells[2].c_str())});
    }
    for (std::size_t p = 1; p < roc.points.size(); ++p) {
      roc.auc += (roc.points[p].fpr - roc.points[p - 1].fpr) *
                 (roc.points[p].tpr + roc.points[p - 1].tpr) / 2.0;
    }
    fs::path svg_path = entry.path();
    svg_path.replace_extension(".svg");
    std::ofstream out(svg_path, std::ios::binary);
    out << roc_svg(roc, name);
  }
}

}  // namespace tlaudit
