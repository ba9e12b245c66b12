#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mtvrp {

// Seedable, splittable random stream.
//
// Algorithm: the 64-bit engine is std::mt19937_64, whose output sequence is
// fixed by the C++ standard. A stream key (seed, id0, id1, ...) is folded with
// SplitMix64 into one 64-bit engine seed:
//   h = splitmix64(seed); for each id: h = splitmix64(h ^ splitmix64(id + 0x9e3779b97f4a7c15))
// Derived values never go through std:: distributions (their output is
// implementation-defined):
//   uniform01   = (next >> 11) * 2^-53
//   uniform_int = lo + rejection-sampled (next mod range)
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // Independent child stream keyed by the ids.
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

  static std::uint64_t splitmix64(std::uint64_t x);

  std::uint64_t next() { return engine_(); }
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p) { return uniform01() < p; }

 private:
  struct RawSeed {};
  Rng(RawSeed, std::uint64_t engine_seed) : engine_(engine_seed) {}

  std::mt19937_64 engine_;
};

}  // namespace mtvrp
