#include "omniban/rng.hpp"

#include <cmath>
#include <numbers>

namespace omniban {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed) : key_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

Rng Rng::split(std::string_view label) const { return split(fnv1a(label)); }

Rng Rng::split(std::uint64_t label) const {
  return Rng(mix64(key_ ^ mix64(label + 0x3c6ef372fe94f82bULL)), 0);
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(key_ + mix64(c));
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

Tensor Rng::normal_tensor(Shape shape, double stddev) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = stddev * normal();
  return Tensor(std::move(shape), std::move(data));
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = uniform(lo, hi);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace omniban
