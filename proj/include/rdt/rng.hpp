#pragma once

#include <cstdint>
#include <random>

#include "rdt/common.hpp"

namespace rdt {

// Deterministic random source.  The raw engine (mt19937_64) is fully
// specified by the standard and the variate transforms below are hand-rolled,
// so sequences are reproducible across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  int uniform_int(int n) { return static_cast<int>(gen_() % static_cast<uint64_t>(n)); }

  // Box-Muller; one fresh pair of uniforms per call keeps the draw order
  // independent of call parity.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
  }

  Vec normal_vec(size_t n, double stddev) {
    Vec out(n);
    for (double& v : out) v = normal(0.0, stddev);
    return out;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      const size_t j = gen_() % i;
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent child seed from a master seed and a stream index,
// for reproducible parallel generation.
inline uint64_t sub_seed(uint64_t master, uint64_t stream) {
  return splitmix64(splitmix64(master) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1));
}

}  // namespace rdt
