#pragma once

#include <cstdint>
#include <span>
#include <utility>

#include "transnet/tensor.hpp"

namespace transnet {

// xoshiro256** seeded through splitmix64, with Box-Muller normals. The
// stream depends only on the seed, never on the platform or standard
// library, so experiments replay bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Unbiased (rejection sampling).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent generator for sub-stream `stream`, derived from this seed only.
  Rng derive(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer; used to derive per-fold and per-stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Tensor of N(mean, stdev^2) samples. Throws ParameterError for stdev < 0.
Tensor sample_normal(Rng& rng, Shape4 shape, double mean, double stdev);

/// Fisher-Yates shuffle driven by `rng`.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace transnet
