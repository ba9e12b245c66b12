#include "mtvrp/core/rng.hpp"

#include <stdexcept>

namespace mtvrp {

std::uint64_t Rng::splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t id : ids) h = splitmix64(h ^ splitmix64(id + 0x9e3779b97f4a7c15ULL));
  return Rng(RawSeed{}, h);
}

double Rng::uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("uniform_int: empty range");
  const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
  if (range == 0) return static_cast<std::int64_t>(next());
  const std::uint64_t threshold = (0 - range) % range;
  std::uint64_t r = next();
  while (r < threshold) r = next();
  return lo + static_cast<std::int64_t>(r % range);
}

}  // namespace mtvrp
