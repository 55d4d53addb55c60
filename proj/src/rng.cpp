#include "cfspn/rng.hpp"

#include <cmath>

namespace cfspn::rng {

double Engine::uniform01() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Engine::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

int Engine::uniform_int(int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(gen_() % span);
}

double Engine::normal(double mu, double sigma) {
  if (sigma <= 0.0) return mu;
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mu + sigma * r * std::cos(6.283185307179586476925286766559 * u2);
}

double Engine::chi_squared(int df) {
  double acc = 0.0;
  for (int i = 0; i < df; ++i) {
    const double z = normal(0.0, 1.0);
    acc += z * z;
  }
  return acc;
}

double Engine::pareto(double shape) {
  double u = uniform01();
  while (u >= 1.0) u = uniform01();
  return std::pow(1.0 - u, -1.0 / shape);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined word
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

} // namespace cfspn::rng
