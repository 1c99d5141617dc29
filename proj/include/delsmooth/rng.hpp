#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace delsmooth {

// Disjoint counter ranges for the independent random batches of one instance.
enum class Phase : std::uint64_t {
  prediction = 1,
  certification = 2,
  attack = 3,
  training = 4,
};

namespace detail {

inline constexpr std::uint64_t splitmix64_step(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  std::uint64_t s = h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  return splitmix64_step(s);
}

}  // namespace detail

// FNV-1a, used to key a random stream on text content.
inline constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Identifies one random stream: (run seed, instance, phase). Individual
// Monte Carlo draws are then indexed by a sample counter, so any
// partitioning of the samples across threads reproduces the same draws.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t instance = 0;
  Phase phase = Phase::prediction;

  std::uint64_t derive(std::uint64_t counter) const {
    std::uint64_t h = detail::hash_combine(seed, instance);
    h = detail::hash_combine(h, static_cast<std::uint64_t>(phase));
    return detail::hash_combine(h, counter);
  }
};

// SplitMix64 generator seeded from a derived key. Cheap to construct, so
// one is created per Monte Carlo draw.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t state) : state_(state) {}
  CounterRng(const StreamKey& key, std::uint64_t counter) : state_(key.derive(counter)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return detail::splitmix64_step(state_); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, bound) without modulo bias.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = max() - max() % bound;
    std::uint64_t v;
    do {
      v = (*this)();
    } while (v >= limit);
    return v % bound;
  }

 private:
  std::uint64_t state_;
};

}  // namespace delsmooth
