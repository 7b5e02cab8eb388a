#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace mmimt {

// Deterministic random number generation. All randomness in the toolkit goes
// through this generator so that runs are byte-identical across platforms;
// std::uniform_* distributions are implementation-defined and must not be used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // splitmix64 step.
  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return (next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Requires n >= 1.
  int uniform_int(int n) { return static_cast<int>(uniform() * n); }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Derives a stage-specific seed from the single user-supplied seed, so that
// independent pipeline stages draw from unrelated streams.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage) {
  Rng mix(global_seed ^ fnv1a64(stage));
  return mix.next();
}

}  // namespace mmimt
