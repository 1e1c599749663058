#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "omniban/tensor.hpp"

namespace omniban {

/// Splittable counter-based generator. The n-th draw of a stream is a pure
/// function of (key, n), so streams split by label never overlap and
/// results do not depend on the standard library's distribution code.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent child stream keyed by this stream's key and `label`.
  /// Does not advance this stream.
  Rng split(std::string_view label) const;
  Rng split(std::uint64_t label) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller (one draw per call).
  double normal();
  double normal(double mean, double stddev);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  Tensor normal_tensor(Shape shape, double stddev);
  Tensor uniform_tensor(Shape shape, double lo, double hi);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);
/// FNV-1a over bytes.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace omniban
