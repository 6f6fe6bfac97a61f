#include "pgg/random.hpp"

#include <limits>
#include <stdexcept>

namespace pgg {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view cell, std::uint64_t index) {
  const std::uint64_t h = splitmix64(master ^ fnv1a64(cell));
  return splitmix64(h ^ index);
}

std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 1));
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t range = n;
  // 2^64 mod n, computed without overflow.
  const std::uint64_t rem = (std::numeric_limits<std::uint64_t>::max() % range + 1) % range;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - rem;  // inclusive
  std::uint64_t x = rng();
  while (x > limit) x = rng();
  return static_cast<std::size_t>(x % range);
}

}  // namespace pgg
