#pragma once

#include <cstdint>
#include <random>

namespace cfspn::rng {

/// Seeded random stream with explicit transforms. None of the draws go
/// through std:: distribution objects, so a given seed produces the same
/// stream on every standard library.
class Engine {
public:
  explicit Engine(std::uint64_t seed) : gen_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01();

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform over the integers {lo, ..., hi}, both ends inclusive.
  int uniform_int(int lo, int hi);

  /// Box-Muller. `sigma` is a standard deviation; sigma <= 0 returns `mu`.
  double normal(double mu, double sigma);

  /// Sum of `df` squared standard normals.
  double chi_squared(int df);

  /// Pareto with scale 1: density a x^-(a+1) on [1, inf).
  double pareto(double shape);

  std::uint64_t raw() { return gen_(); }

private:
  std::mt19937_64 gen_;
};

/// Derives an independent stream seed from a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

} // namespace cfspn::rng
