#pragma once

#include <cstdint>
#include <random>

namespace sos {

// Seeded generator with a fully specified mapping from engine output to
// samples. std::mt19937_64 is bit-exact across platforms; the standard
// distributions are not, so the helpers below define their own derivation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], both ends inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1u;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Independent substream for a named purpose.
  Rng fork(std::uint64_t stream) {
    return Rng(next_u64() ^ (0x9e3779b97f4a7c15ull * (stream + 1u)));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sos
