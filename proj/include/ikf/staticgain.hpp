#pragma once

#include <cstdint>

#include "ikf/model.hpp"

namespace ikf::staticgain {

// Feasibility margin on the lifted spectral radius.
inline constexpr double kEpsMargin = 1e-9;

struct GainCandidate {
  ComplexMatrix K;  // m x l
};

struct FeasibilityResult {
  double spectral_radius = 0.0;
  bool feasible = false;  // spectral_radius < 1 - kEpsMargin
};

struct SearchConfig {
  double bisect_tol = 1e-3;   // absolute tolerance on p_e
  int evals_per_pe = 2000;    // inner-search budget per probed p_e
  int restarts = 5;           // Nelder-Mead restarts (first is the seed gain)
  std::uint64_t seed = 0x5eedu;
};

struct StaticGainResult {
  double p_lower_bound = 0.0;
  GainCandidate best_K;
  bool budget_exhausted = false;
};

// Spectral radius of the lifted erasure-Lyapunov operator
//   p_e * conj(A) (x) A + (1 - p_e) * conj(A+KC) (x) (A+KC).
// Radius < 1 is equivalent to the existence of M, N > 0 solving the
// fixed-point identity, i.e. intermittent observability under the static
// gain K. Throws std::invalid_argument on dimension mismatch.
[[nodiscard]] FeasibilityResult erasure_lyapunov_radius(const ComplexMatrix& A,
                                                        const ComplexMatrix& C,
                                                        const ComplexMatrix& K,
                                                        double p_e);

// All eigenvalue moduli of A strictly below 1.
[[nodiscard]] bool lyapunov_stable(const ComplexMatrix& A);

// Largest p_e certified feasible by some static gain: bisection on
// [0, 1/rho(A)^2] with a derivative-free inner search over K seeded from the
// erasure-free stationary Kalman gain. The result lower-bounds the true
// critical erasure probability. Raw-matrix form; A need not be Jordan.
[[nodiscard]] StaticGainResult max_static_gain_erasure(const ComplexMatrix& A,
                                                       const ComplexMatrix& C,
                                                       const SearchConfig& cfg = {});

[[nodiscard]] StaticGainResult max_static_gain_erasure(const model::SystemSpec& spec,
                                                       const SearchConfig& cfg = {});

}  // namespace ikf::staticgain
