#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace defectgen {

// splitmix64 step; also used as a stateless hash for per-pixel noise.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
  return splitmix64(s);
}

// Deterministic child seed for a named stream (sample index, stage id, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base + 0xD1B54A32D192ED03ull * (stream + 1);
  splitmix64(s);
  return splitmix64(s);
}

// Uniform value in [0,1) from a stateless hash of up to three coordinates.
inline double hash_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                           std::uint64_t c = 0) {
  std::uint64_t s = hash_combine(hash_combine(hash_combine(seed, a), b), c);
  std::uint64_t z = splitmix64(s);
  return static_cast<double>(z >> 11) * 0x1.0p-53;
}

// Seeded RNG wrapper. One logical stream per object; all stochastic
// operations in the pipeline take an Rng (or a seed) explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double normal() { return normal_(eng_); }
  double uniform() { return unif_(eng_); }

  // Inclusive bounds.
  long uniform_int(long lo, long hi) {
    return std::uniform_int_distribution<long>(lo, hi)(eng_);
  }

  std::uint64_t raw() { return eng_(); }

  template <typename Derived>
  void fill_normal(Eigen::DenseBase<Derived>& m) {
    using S = typename Derived::Scalar;
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        m(r, c) = static_cast<S>(normal());
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
};

}  // namespace defectgen
