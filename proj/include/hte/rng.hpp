#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include "hte/special.hpp"

namespace hte {

// Deterministic random numbers.
//
// The standard library's engine (mt19937_64) has a fully specified stream, but
// its *distributions* do not: std::normal_distribution, std::shuffle and
// friends are implementation defined and may change between standard library
// releases.  Everything here therefore draws raw 64-bit words from the engine
// and applies fixed transforms, so identical seeds give bit-identical results
// on every platform.

// splitmix64 finalizer; used to mix seed words.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a master seed and a path of indices
// (replicate number, fold, tree, ...).  Mixing after each word keeps
// derive(s, {a, b}) and derive(s, {b, a}) distinct.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(master);
  for (std::uint64_t w : path) h = mix64(h ^ w);
  return h;
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1): 53 random mantissa bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // Uniform on the open interval (0, 1); safe to feed a quantile function.
  double uniform_open() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via the inverse CDF (fixed transform, unlike
  // std::normal_distribution).
  double normal() { return normal_quantile(uniform_open()); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer on [0, n), unbiased via rejection sampling.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Fisher-Yates shuffle with the rejection sampler above; std::shuffle's
  // index sequence is implementation defined, this one is not.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Partial Fisher-Yates: after the call, v[0..k) holds a uniform random
  // sample of k distinct elements (order random).
  template <class T>
  void partial_shuffle(std::vector<T>& v, std::size_t k) {
    const std::size_t n = v.size();
    if (k > n) k = n;
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(uniform_int(n - i));
      std::swap(v[i], v[j]);
    }
  }

private:
  std::mt19937_64 gen_;
};

}  // namespace hte
