#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

namespace dpi {

// splitmix64 step; used to derive decorrelated child seeds from a base seed
// so every (subject, day) or (repetition, stage) pair gets its own stream.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b) {
  return derive_seed(derive_seed(base, a), b);
}

// Thin wrapper over mt19937_64 with the sampling helpers the pipeline needs.
// mt19937_64's output sequence is fixed by the standard and the derived
// distributions below are hand-rolled, so results are reproducible across
// platforms and standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform double in [0, 1), 53-bit resolution
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n); rejection sampling avoids modulo bias
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t rem = std::numeric_limits<std::uint64_t>::max() % n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - rem;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Box-Muller with the second deviate cached
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Standard skew-normal with shape alpha, via the two-normal representation
  // delta*|u0| + sqrt(1-delta^2)*u1 with delta = alpha/sqrt(1+alpha^2).
  double skew_normal(double alpha) {
    const double delta = alpha / std::sqrt(1.0 + alpha * alpha);
    const double u0 = normal();
    const double u1 = normal();
    return delta * std::abs(u0) + std::sqrt(1.0 - delta * delta) * u1;
  }

  // Fisher-Yates
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i)
      std::swap(items[i - 1], items[below(i)]);
  }

  // k distinct indices drawn uniformly from [0, n) via partial Fisher-Yates;
  // the k chosen come first, the unchosen remainder follows in shuffled-ish
  // order (callers use it as a replacement queue).
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t m = k < n ? k : n;
    for (std::size_t i = 0; i < m; ++i)
      std::swap(idx[i], idx[i + below(n - i)]);
    return idx;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace dpi
