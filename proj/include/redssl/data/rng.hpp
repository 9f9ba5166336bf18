#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace redssl::data {

// Counter-based generator: the i-th output is SplitMix64's finalizer applied
// to key + (i + 1) * golden_gamma, where the key is derived from
// (seed, purpose, a, b). Independent streams for every (purpose, epoch, batch)
// tuple come for free and results do not depend on call interleaving.
//
// Distributions are implemented here rather than through <random> so the
// produced numbers are identical across standard library implementations.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0, std::uint64_t b = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Standard normal via the Box-Muller transform.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

}  // namespace redssl::data
