#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace eflab {

/// Seedable generator threaded explicitly through every stochastic operation.
/// `split()` derives an independent child stream; `stream(k)` derives the k-th
/// child without advancing the parent, so per-run streams do not depend on the
/// order (or thread) in which runs are executed.
class Rng {
public:
  using result_type = std::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  std::uint64_t seed() const noexcept { return seed_; }

  Rng split() { return Rng(mix(engine_() ^ 0x9e3779b97f4a7c15ULL)); }
  Rng stream(std::uint64_t k) const { return Rng(mix(seed_ + 0x632be59bd9b4e019ULL * (k + 1))); }

  /// Uniform on [0,1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  Eigen::VectorXd normal_vector(Eigen::Index dim) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal();
    return v;
  }

  /// Index drawn from unnormalized non-negative weights.
  template <class Weights>
  std::size_t categorical(Weights const& w) {
    double total = 0.0;
    for (auto x : w) total += x;
    double r = uniform() * total;
    std::size_t last_positive = 0;
    std::size_t i = 0;
    for (auto x : w) {
      if (x > 0.0) {
        last_positive = i;
        if (r < x) return i;
        r -= x;
      }
      ++i;
    }
    return last_positive;
  }

private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace eflab
