#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace sae {

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent stream seed from the master seed and a key.
///
/// Every random decision in the library draws from a stream keyed by
/// (purpose tag, generation, index), so the order in which parallel workers
/// run cannot change what any of them sees.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t generation = 0, std::uint64_t index = 0);

/// Seeded generator with distribution code defined here rather than by the
/// standard library, so sequences are identical across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). n must be positive.
  std::size_t below(std::size_t n);

  /// Standard normal via Box-Muller (one draw per call).
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sae
