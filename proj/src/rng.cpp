#include "ikf/rng.hpp"

#include <cmath>
#include <numbers>

namespace ikf::rng {

double SplitMix64::next_gaussian() {
  double u1 = next_double();
  const double u2 = next_double();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  SplitMix64 mixer(seed ^ (0xD1B54A32D192ED03ull * (index + 1)));
  return mixer.next_u64();
}

}  // namespace ikf::rng
