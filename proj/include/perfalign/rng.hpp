#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace perfalign {

// mt19937_64 is fully specified by the standard but the distributions are not,
// so everything that has to reproduce across toolchains draws through here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  /// Derive an independent stream, e.g. one per epoch or per worker.
  static std::uint64_t mix(std::uint64_t seed, std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace perfalign
