#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string>

namespace jigsaw {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Derives a child seed from a master seed and a path of stream keys.
/// derive_seed(s, {a, b}) differs from derive_seed(s, {b, a}).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> keys);

/// Seedable generator with portable distributions.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The std:: distributions are not, so sampling is done here.
/// Streams are split with derive_seed() rather than by sharing one engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on {0, ..., n-1}. n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Uniform on {lo, ..., hi}.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Box-Muller. Each call consumes exactly two engine outputs.
  double normal(double mean = 0.0, double stddev = 1.0);

  std::string state() const;
  void set_state(const std::string& state);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = uniform_index(i);
      std::iter_swap(first + (i - 1), first + j);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace jigsaw
