#include "tlaudit/common.hpp"

#include <charconv>
#include <cmath>

namespace tlaudit {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return mix64(seed ^ mix64(stream ^ mix64(index)));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) {
    throw NonFiniteError(what + ": non-finite values in input");
  }
}

}  // namespace tlaudit
