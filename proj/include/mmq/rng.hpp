#pragma once
#include <cmath>
#include <cstdint>
#include <random>

namespace mmq {

// Deterministic random source.
//
// All stochastic pieces of the lab (init, exploration, replay sampling,
// environment noise) draw from instances of this class, never from global
// state, so a run is reproducible bit-for-bit from its seed.  The raw engine
// is std::mt19937_64 but every derived quantity (uniform doubles, normals,
// bounded ints) is computed here with a fixed recipe instead of the
// std::*_distribution wrappers, whose output may differ across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n).  n must be positive.
  int uniform_int(int n) {
    return static_cast<int>(gen_() % static_cast<std::uint64_t>(n));
  }

  // Standard normal via Box-Muller; the second sample of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(1.0 - u1));  // 1-u1 in (0,1], log finite
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Independent child stream; forks with distinct tags never collide with the
  // parent or each other in practice (splitmix64 scrambling of seed and tag).
  Rng fork(std::uint64_t tag) const {
    std::uint64_t z = seed_ + 0x9E3779B97F4A7C15ull * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mmq
