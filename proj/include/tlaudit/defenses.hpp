#pragma once

#include "tlaudit/common.hpp"

#include <optional>
#include <utility>

namespace tlaudit {

enum class Surface { Feature, Verification, Recognition };

std::string surface_name(Surface s);
Surface surface_from_name(const std::string& name);

enum class DefenseKind { None, Randomize, Round, TopK };

struct DefenseSpec {
  DefenseKind kind = DefenseKind::None;
  double eta = 0.0;      // randomize: relative noise scale
  int sig_figs = 1;      // round: decimal significant figures
  int keep_k = 1;        // topk: revealed entries
  std::uint64_t seed = 0;

  static DefenseSpec none() { return {}; }
  static DefenseSpec randomize(double eta, std::uint64_t seed);
  static DefenseSpec round(int sig_figs);
  static DefenseSpec topk(int keep_k);

  std::string label() const;       // e.g. "randomize"
  std::string param_label() const; // e.g. "1.0"
};

/// Each element x is replaced by a draw from Normal(x, (eta*|x|)^2), then the
/// surface's normalization is applied: recognition outputs are clamped to be
/// non-negative and rescaled to sum 1, verification scalars clamped at 0,
/// feature vectors left as-is. Deterministic per (seed, query_index).
Vector randomize_output(const Vector& v, double eta, std::uint64_t seed, Surface surface,
                        std::uint64_t query_index);

/// Round to `sig_figs` decimal significant figures, half away from zero.
/// sig_figs >= 17 is an exact identity.
double round_sig(double v, int sig_figs);
Vector round_output(const Vector& v, int sig_figs);

/// Top-k entries by score, ties broken toward the lower class index. Scores
/// are exposed as-is (no renormalization) in descending order.
std::vector<std::pair<int, double>> topk_mask(const Vector& confidences, int keep_k);

enum class TopkCounterStrategy { TruncatedK, ZerofillC };

/// Rebuilds per-query observation rows from masked responses for one class.
/// TruncatedK: slot j holds the j-th largest revealed score. ZerofillC:
/// reconstructs full c-length vectors with zeros for hidden entries.
Matrix counter_topk_rows(const std::vector<std::vector<std::pair<int, double>>>& masked,
                         TopkCounterStrategy strategy, int c);

/// Upper-triangular covariance entries (diagonal included) of the rebuilt
/// rows; the class feature row a defended recognition attack works from.
Vector counter_topk_features(const std::vector<std::vector<std::pair<int, double>>>& masked,
                             TopkCounterStrategy strategy, int c);

/// Ordered filter list applied to every API response. Vector-valued filters
/// (randomize, round) compose in declared order; an optional trailing top-k
/// changes the response type and is handled by the recognition collection
/// path.
class DefenseChain {
 public:
  DefenseChain() = default;
  explicit DefenseChain(std::vector<DefenseSpec> filters);

  Vector apply(const Vector& v, Surface surface, std::uint64_t query_index) const;
  double apply_scalar(double v, Surface surface, std::uint64_t query_index) const;

  bool empty() const { return filters_.empty() && !topk_.has_value(); }
  const std::optional<DefenseSpec>& topk() const { return topk_; }
  const std::vector<DefenseSpec>& vector_filters() const { return filters_; }

  std::string label() const;
  std::string param_label() const;

 private:
  std::vector<DefenseSpec> filters_;
  std::optional<DefenseSpec> topk_;
};

}  // namespace tlaudit
