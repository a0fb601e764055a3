#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace clima {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using MatF = Mat<float>;
using MatD = Mat<double>;

// Named tensor map. std::map keeps iteration order deterministic, which the
// optimizer, serializer and gradient clipping all rely on.
template <class S>
using ParamMap = std::map<std::string, Mat<S>>;

using Params = ParamMap<float>;

template <class To, class From>
ParamMap<To> cast_params(const ParamMap<From>& in) {
  ParamMap<To> out;
  for (const auto& [name, tensor] : in) out.emplace(name, tensor.template cast<To>());
  return out;
}

inline uint64_t splitmix64(uint64_t& state) noexcept {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stable seed derivation for independent sub-streams (per-run seeds, shuffle
// streams, dropout streams).
inline uint64_t derive_seed(uint64_t master, uint64_t salt) noexcept {
  uint64_t s = master ^ (0x9e3779b97f4a7c15ull * (salt + 1));
  return splitmix64(s);
}

// Deterministic RNG wrapper. Avoids std::distribution types whose output is
// implementation-defined; everything here is pinned to mt19937_64 draws.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  // Uniform in [0,1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller, one cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Normal(0, sigma) resampled until within cutoff standard deviations.
  double truncated_normal(double sigma, double cutoff = 2.0) {
    double z = normal();
    while (std::abs(z) > cutoff) z = normal();
    return z * sigma;
  }

  // Uniform in [0, n) by rejection sampling.
  uint64_t bounded(uint64_t n) {
    if (n <= 1) return 0;
    const uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % n;
    uint64_t x = eng_();
    while (x >= limit) x = eng_();
    return x % n;
  }

  uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <class T>
void shuffle_inplace(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.bounded(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace clima
