#pragma once

#include <cstdint>

namespace ikf::rng {

// splitmix64 (Steele, Lea, Flood 2014): a 64-bit mixing generator. Chosen
// because per-stream state is a single counter, so (seed, trial) derived
// streams are reproducible regardless of worker count, and uniforms never
// depend on implementation-defined std::uniform_real_distribution behavior.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) from the top 53 bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller on two uniforms (deterministic pairing).
  double next_gaussian();

 private:
  std::uint64_t state_;
};

// Stream key for (seed, index) so parallel and serial runs draw identically.
[[nodiscard]] std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace ikf::rng
