#include "wigraph/rng.hpp"

#include <cmath>

namespace wigraph {

uint64_t Rng::below(uint64_t n) {
  if (n == 0) return 0;
  // Largest multiple of n that fits in 64 bits; draws at or above it are
  // rejected to keep the result exactly uniform.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return x % n;
}

double Rng::gaussian() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::gumbel() { return -std::log(-std::log(uniform())); }

namespace {

// splitmix64 finalizer; good avalanche, cheap.
uint64_t mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t a,
                     uint64_t b) {
  // FNV-1a over the tag, then mix in root and indices.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h = mix(h ^ mix(root));
  h = mix(h ^ mix(a));
  h = mix(h ^ mix(b));
  return h;
}

}  // namespace wigraph
