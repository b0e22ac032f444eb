#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tlaudit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
struct SingleClassError : Error { using Error::Error; };
struct NonFiniteError : Error { using Error::Error; };
struct SingularCovarianceError : Error { using Error::Error; };
struct NonConvergenceError : Error { using Error::Error; };
struct ClassOverlapError : Error { using Error::Error; };
struct AllOneClassError : Error { using Error::Error; };
struct DegenerateComponentError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };

/// splitmix64 finalizer; used to derive independent seed streams.
std::uint64_t mix64(std::uint64_t x);

/// Seed for a named sub-stream of a root seed. Stable across runs and platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

/// Deterministic random source. All sampling in the toolkit goes through this
/// class so results depend only on the seed, not on library internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0,1) with 53 bits of precision.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double a = 0.0, b = 0.0, s = 0.0;
    do {
      a = 2.0 * uniform() - 1.0;
      b = 2.0 * uniform() - 1.0;
      s = a * a + b * b;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = b * f;
    have_spare_ = true;
    return a * f;
  }

  /// Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n) {
    return static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(n));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(uniform_int(static_cast<std::int64_t>(i)))]);
    }
  }

  Vector normal_vector(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

void require_finite(const Matrix& m, const std::string& what);

}  // namespace tlaudit
