#pragma once

#include <cstdint>
#include <iterator>
#include <utility>

namespace ocdcvae {

// Counter-based 64-bit generator: the i-th output is the SplitMix64 finalizer
// applied to seed + i * golden_gamma. Normals use Box-Muller and integer draws
// use rejection sampling, so streams are identical on every platform (no
// dependence on <random> distribution implementations).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double normal();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  // Independent child stream. The child's seed depends only on this
  // generator's seed and `stream`, never on how many values were drawn.
  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x);

template <class RandomIt>
void shuffle(RandomIt first, RandomIt last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(std::distance(first, last));
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = rng.uniform_index(i);
    using std::swap;
    swap(first[i - 1], first[j]);
  }
}

}  // namespace ocdcvae
