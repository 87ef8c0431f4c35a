#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace fbeuler {

// Counter-based generator: every draw is a pure function of
// (seed, scenario tag, test index, counter), so runs are reproducible
// independent of draw order elsewhere in the program.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view scenario, std::uint64_t test_index)
      : key_(mix(mix(seed ^ 0x9e3779b97f4a7c15ull, fnv1a(scenario)), test_index)) {}

  explicit CounterRng(std::uint64_t seed) : CounterRng(seed, "", 0) {}

  // uniform in [0,1)
  double uniform() {
    const std::uint64_t z = mix(key_, counter_++);
    return static_cast<double>(z >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 6.283185307179586476925287 * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  std::uint64_t next_u64() { return mix(key_, counter_++); }

 private:
  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

  // splitmix64 finalizer on (key + counter)
  static std::uint64_t mix(std::uint64_t key, std::uint64_t ctr) {
    std::uint64_t z = key + 0x9e3779b97f4a7c15ull * (ctr + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fbeuler
