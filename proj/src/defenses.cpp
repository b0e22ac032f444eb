#include "tlaudit/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tlaudit {

std::string surface_name(Surface s) {
  switch (s) {
    case Surface::Feature: return "feature";
    case Surface::Verification: return "verification";
    case Surface::Recognition: return "recognition";
  }
  return "unknown";
}

Surface surface_from_name(const std::string& name) {
  if (name == "feature") return Surface::Feature;
  if (name == "verification") return Surface::Verification;
  if (name == "recognition") return Surface::Recognition;
  throw ConfigError("unknown surface: " + name);
}

DefenseSpec DefenseSpec::randomize(double eta, std::uint64_t seed) {
  if (eta < 0) throw ConfigError("randomize: eta must be non-negative");
  DefenseSpec spec;
  spec.kind = DefenseKind::Randomize;
  spec.eta = eta;
  spec.seed = seed;
  return spec;
}

DefenseSpec DefenseSpec::round(int sig_figs) {
  if (sig_figs < 1) throw ConfigError("round: sig_figs must be at least 1");
  DefenseSpec spec;
  spec.kind = DefenseKind::Round;
  spec.sig_figs = sig_figs;
  return spec;
}

DefenseSpec DefenseSpec::topk(int keep_k) {
  if (keep_k < 1) throw ConfigError("topk: keep_k must be at least 1");
  DefenseSpec spec;
  spec.kind = DefenseKind::TopK;
  spec.keep_k = keep_k;
  return spec;
}

std::string DefenseSpec::label() const {
  switch (kind) {
    case DefenseKind::None: return "none";
    case DefenseKind::Randomize: return "randomize";
    case DefenseKind::Round: return "round";
    case DefenseKind::TopK: return "topk";
  }
  return "unknown";
}

std::string DefenseSpec::param_label() const {
  switch (kind) {
    case DefenseKind::None: return "";
    case DefenseKind::Randomize: return format_double(eta);
    case DefenseKind::Round: return std::to_string(sig_figs);
    case DefenseKind::TopK: return std::to_string(keep_k);
  }
  return "";
}

Vector randomize_output(const Vector& v, double eta, std::uint64_t seed, Surface surface,
                        std::uint64_t query_index) {
  if (eta < 0) throw ConfigError("randomize_output: eta must be non-negative");
  if (eta == 0) return v;
  Rng rng(derive_seed(seed, 0x6e6f6973ULL, query_index));  // "nois"
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out[i] = v[i] + eta * std::fabs(v[i]) * rng.normal();
  }
  if (surface == Surface::Recognition) {
    out = out.cwiseMax(0.0);
    const double sum = out.sum();
    if (sum > 0) {
      out /= sum;
    } else {
      out.setConstant(1.0 / static_cast<double>(out.size()));
    }
  } else if (surface == Surface::Verification) {
    out = out.cwiseMax(0.0);
  }
  return out;
}

double round_sig(double v, int sig_figs) {
  if (sig_figs < 1) throw ConfigError("round_sig: sig_figs must be at least 1");
  if (sig_figs >= 17) return v;  // beyond double precision
  if (v == 0.0 || !std::isfinite(v)) return v;
  const double magnitude = std::floor(std::log10(std::fabs(v)));
  const double scale = std::pow(10.0, sig_figs - 1 - magnitude);
  return std::copysign(std::floor(std::fabs(v) * scale + 0.5) / scale, v);
}

Vector round_output(const Vector& v, int sig_figs) {
  Vector out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = round_sig(v[i], sig_figs);
  return out;
}

std::vector<std::pair<int, double>> topk_mask(const Vector& confidences, int keep_k) {
  const int c = static_cast<int>(confidences.size());
  if (keep_k < 1 || keep_k > c) throw ConfigError("topk_mask: keep_k out of range");
  std::vector<int> order(static_cast<std::size_t>(c));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return confidences[a] > confidences[b];
  });
  std::vector<std::pair<int, double>> out;
  out.reserve(static_cast<std::size_t>(keep_k));
  for (int i = 0; i < keep_k; ++i) {
    out.emplace_back(order[static_cast<std::size_t>(i)], confidences[order[static_cast<std::size_t>(i)]]);
  }
  return out;
}

Matrix counter_topk_rows(const std::vector<std::vector<std::pair<int, double>>>& masked,
                         TopkCounterStrategy strategy, int c) {
  if (masked.empty()) throw DimensionError("counter_topk_rows: no responses");
  const std::size_t k = masked.front().size();
  for (const auto& response : masked) {
    if (response.size() != k) {
      throw DimensionError("counter_topk_rows: inconsistent response lengths");
    }
  }
  if (strategy == TopkCounterStrategy::TruncatedK) {
    // Responses come rank-sorted from topk_mask; slot j is the j-th largest.
    Matrix rows(static_cast<Eigen::Index>(masked.size()), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < masked.size(); ++i) {
      auto sorted = masked[i];
      std::stable_sort(sorted.begin(), sorted.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      for (std::size_t j = 0; j < k; ++j) {
        rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = sorted[j].second;
      }
    }
    return rows;
  }
  Matrix rows = Matrix::Zero(static_cast<Eigen::Index>(masked.size()), c);
  for (std::size_t i = 0; i < masked.size(); ++i) {
    for (const auto& [index, score] : masked[i]) {
      if (index < 0 || index >= c) throw DimensionError("counter_topk_rows: class index out of range");
      rows(static_cast<Eigen::Index>(i), index) = score;
    }
  }
  return rows;
}

namespace {

Vector upper_triangular_covariance(const Matrix& rows) {
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Matrix centered = rows.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / (static_cast<double>(rows.rows()) - 1.0);
  const int d = static_cast<int>(cov.rows());
  Vector out(d * (d + 1) / 2);
  int pos = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) out[pos++] = cov(i, j);
  }
  return out;
}

}  // namespace

Vector counter_topk_features(const std::vector<std::vector<std::pair<int, double>>>& masked,
                             TopkCounterStrategy strategy, int c) {
  return upper_triangular_covariance(counter_topk_rows(masked, strategy, c));
}

DefenseChain::DefenseChain(std::vector<DefenseSpec> filters) {
  for (auto& spec : filters) {
    switch (spec.kind) {
      case DefenseKind::None:
        break;
      case DefenseKind::TopK:
        if (topk_.has_value()) throw ConfigError("defense chain: multiple top-k filters");
        topk_ = spec;
        break;
      case DefenseKind::Randomize:
      case DefenseKind::Round:
        if (topk_.has_value()) {
          throw ConfigError("defense chain: top-k must be the last filter");
        }
        filters_.push_back(spec);
        break;
    }
  }
}

Vector DefenseChain::apply(const Vector& v, Surface surface, std::uint64_t query_index) const {
  Vector out = v;
  for (const auto& spec : filters_) {
    switch (spec.kind) {
      case DefenseKind::Randomize:
        out = randomize_output(out, spec.eta, spec.seed, surface, query_index);
        break;
      case DefenseKind::Round:
        out = round_output(out, spec.sig_figs);
        break;
      default:
        break;
    }
  }
  return out;
}

double DefenseChain::apply_scalar(double v, Surface surface, std::uint64_t query_index) const {
  Vector wrapped(1);
  wrapped[0] = v;
  return apply(wrapped, surface, query_index)[0];
}

std::string DefenseChain::label() const {
  if (empty()) return "none";
  std::string out;
  for (const auto& spec : filters_) {
    if (!out.empty()) out += '+';
    out += spec.label();
  }
  if (topk_) {
    if (!out.empty()) out += '+';
    out += topk_->label();
  }
  return out;
}

std::string DefenseChain::param_label() const {
  if (empty()) return "";
  std::string out;
  for (const auto& spec : filters_) {
    if (!out.empty()) out += '+';
    out += spec.param_label();
  }
  if (topk_) {
    if (!out.empty()) out += '+';
    out += topk_->param_label();
  }
  return out;
}

}  // namespace tlaudit
