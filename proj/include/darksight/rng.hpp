#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace darksight {

// Deterministic draw stream. A single seeded instance drives every
// parameter draw in a fixed module order (tcm, lam, ram), so one config
// seed reproduces the whole model bit for bit. Uniform doubles are mapped
// from the top 53 bits of the mt19937_64 output rather than through
// std::uniform_real_distribution, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 gen_;
};

// Init bound for weight draws: U(-sqrt(1/fan_in), +sqrt(1/fan_in)).
inline double fan_in_bound(int fan_in) {
  return std::sqrt(1.0 / static_cast<double>(fan_in));
}

}  // namespace darksight
