#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace wigraph {

// Deterministic random source.
//
// std::mt19937_64 is fully specified by the C++ standard, so the raw integer
// stream is reproducible everywhere.  The floating-point transforms below are
// written out explicitly instead of going through std:: distributions, whose
// output is implementation-defined and differs between standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform double in the open interval (0, 1).  Never returns an exact 0 or
  // 1, which keeps log() in the Gumbel transform finite.
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).  Rejection sampling, no modulo bias.
  uint64_t below(uint64_t n);

  // Standard normal via Box-Muller (cosine branch only, so each call
  // consumes exactly two raw draws).
  double gaussian();

  // Standard Gumbel: -log(-log(U)), U ~ Uniform(0,1).
  double gumbel();

  // Bernoulli(p) as uniform() < p.
  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Derives an independent substream seed from a root seed, a textual tag and
// up to two indices.  All stochastic consumers (parameter init, per-epoch
// shuffles, per-step sampling noise, per-sample explanation draws) seed their
// own Rng through this, so adding or removing one consumer never shifts the
// draws seen by another.  That is what makes e.g. thread-parallel attribution
// runs bit-identical to serial ones.
uint64_t derive_seed(uint64_t root, std::string_view tag, uint64_t a = 0,
                     uint64_t b = 0);

}  // namespace wigraph
