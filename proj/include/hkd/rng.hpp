#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace hkd {

// Deterministic RNG used everywhere results must replay exactly. All
// distributions are implemented here rather than with std:: distribution
// objects, whose output is implementation-defined.
class RngStream {
 public:
  explicit RngStream(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; draws exactly two uniforms per sample.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n). Modulo bias is irrelevant at our scales and
  // keeps the sequence trivially replayable.
  uint64_t bounded(uint64_t n) { return next_u64() % n; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(bounded(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Sample k distinct values from {0..n-1} \ {exclude} by partial
  // Fisher-Yates over the candidate list. exclude < 0 disables exclusion.
  std::vector<int> sample_without_replacement(int n, int k, int exclude = -1) {
    std::vector<int> pool;
    pool.reserve(n);
    for (int i = 0; i < n; ++i)
      if (i != exclude) pool.push_back(i);
    std::vector<int> out;
    out.reserve(k);
    for (int i = 0; i < k; ++i) {
      size_t j = i + static_cast<size_t>(bounded(pool.size() - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

  // mt19937_64 textual state round-trips exactly per the standard.
  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
  }

 private:
  std::mt19937_64 engine_;
};

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// One master seed fans out to named substreams so components can be varied
// independently (data order, init, negative sampling, bank init, ...).
inline uint64_t substream_seed(uint64_t master, std::string_view name) {
  return splitmix64(master ^ fnv1a64(name));
}

inline RngStream substream(uint64_t master, std::string_view name) {
  return RngStream(substream_seed(master, name));
}

}  // namespace hkd
