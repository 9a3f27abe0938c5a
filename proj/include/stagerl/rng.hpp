#pragma once

// Seeded random numbers with fully pinned-down sampling algorithms, so that
// every draw sequence is reproducible independent of the standard library's
// distribution implementations.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace stagerl {

// Derives an independent stream seed from (seed, stream) via splitmix64.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  Rng() : gen_(0xC0FFEEULL) {}
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  void seed(std::uint64_t s) { gen_.seed(s); }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer on [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const double n = static_cast<double>(hi) - static_cast<double>(lo) + 1.0;
    int k = lo + static_cast<int>(uniform01() * n);
    return k > hi ? hi : k;
  }

  std::size_t uniform_index(std::size_t n) {
    std::size_t k = static_cast<std::size_t>(uniform01() * static_cast<double>(n));
    return k >= n ? n - 1 : k;
  }

  // Standard normal via Box-Muller (two uniform draws per call, no cached
  // spare, so consumption per call is fixed).
  double normal() {
    const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  std::string state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace stagerl
