#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ikf/model.hpp"

namespace ikf::sim {

// Verdict thresholds on the least-squares slope of the mean log-trace over
// the final half of the horizon, in nats per step.
inline constexpr double kSlopeLo = 0.002;
inline constexpr double kSlopeHi = 0.02;
// Traces beyond this are truncated and the trial marked divergent.
inline constexpr double kOverflowGuard = 1e250;
// Tail-index verdict thresholds for the ensemble-mean divergence test (the
// mean of the stationary trace distribution is finite iff its tail index
// exceeds 1; estimates outside (kAlphaDivergent, kAlphaBounded) are decisive).
// The band is sized to the estimator's seed-to-seed spread at the default
// 200-trial/2000-step budget (about +-0.1 near the threshold); tighter gates
// turn sampling noise into confident wrong verdicts.
inline constexpr double kAlphaDivergent = 0.90;
inline constexpr double kAlphaBounded = 1.15;

struct ErasureModel {
  double p_e = 0.0;        // P(observation erased)
  std::uint64_t seed = 0;  // per-trial stream seed
};

struct CovarianceState {
  ComplexMatrix sigma;  // one-step prediction covariance, Hermitian PSD
  long step = 0;
};

// Raw-matrix discrete model; Q_full = B Q B' is the full process-noise
// covariance so discretized continuous systems plug in directly.
struct DiscreteModel {
  ComplexMatrix A;
  ComplexMatrix C;
  ComplexMatrix Q_full;  // m x m
  ComplexMatrix R;       // l x l
};

// Time-varying model; entry n drives step n. All vectors share one length.
struct TimeVaryingModel {
  std::vector<ComplexMatrix> A;
  std::vector<ComplexMatrix> C;
  std::vector<ComplexMatrix> Q_full;
  std::vector<ComplexMatrix> R;

  [[nodiscard]] long horizon() const { return static_cast<long>(A.size()); }
  [[nodiscard]] DiscreteModel at(long n) const;
};

// Q = I_g, R = I_l defaults per the module contract.
[[nodiscard]] DiscreteModel make_model(const model::SystemSpec& spec);

struct TraceSequence {
  std::vector<double> values;  // trace of the prediction covariance per step
  bool overflow = false;       // truncated at kOverflowGuard; tail repeats
};

struct TraceEnsemble {
  std::vector<TraceSequence> trials;
  long horizon = 0;
  double p_e = 0.0;
};

enum class Verdict { kBounded, kDivergent, kInconclusive };

[[nodiscard]] std::string to_string(Verdict v);

struct Classification {
  Verdict verdict = Verdict::kInconclusive;
  double mean_log_slope = 0.0;
  // Tail index of the pooled final-half trace distribution; empty when the
  // ensemble has no resolvable tail (constant or converged traces).
  std::optional<double> tail_alpha;
};

struct SweepResult {
  std::vector<double> grid;
  std::vector<Classification> classifications;
  // Largest bounded grid point and smallest divergent one; 0 / 1 stand in
  // when a side is empty.
  double interval_lo = 0.0;
  double interval_hi = 1.0;
  bool monotone = false;
  std::string diagnostic;
};

// One erasure-driven Riccati step:
//   beta = 1: L = S C'(C S C' + R)^-1,
//             S' = (A - A L C) S (A - A L C)' + A L R L'A' + Q_full
//   beta = 0: S' = A S A' + Q_full
// Result is Hermitian-symmetrized. Throws std::invalid_argument when the
// input covariance is not PSD within tolerance.
[[nodiscard]] CovarianceState kalman_covariance_step(const CovarianceState& state,
                                                     bool beta,
                                                     const DiscreteModel& m);

// Spec-facing overload with explicit noise covariances (Q is g x g).
[[nodiscard]] CovarianceState kalman_covariance_step(const CovarianceState& state,
                                                     bool beta,
                                                     const model::SystemSpec& spec,
                                                     const ComplexMatrix& Q,
                                                     const ComplexMatrix& R);

// Single covariance trajectory from Sigma_0 = I under i.i.d. erasures drawn
// from the model's stream; deterministic given the seed.
[[nodiscard]] TraceSequence run_trial(const DiscreteModel& m, const ErasureModel& em,
                                      long horizon);
[[nodiscard]] TraceSequence run_trial(const model::SystemSpec& spec,
                                      const ErasureModel& em, long horizon);
[[nodiscard]] TraceSequence run_trial(const TimeVaryingModel& m, const ErasureModel& em,
                                      long horizon);

// Ensemble with per-trial streams derived from (seed, trial index); trials
// run on `workers` threads (0 = resolve from IKF_WORKERS or hardware) and
// the result is identical for every worker count.
[[nodiscard]] TraceEnsemble run_ensemble(const DiscreteModel& m, double p_e,
                                         std::uint64_t seed, int trials, long horizon,
                                         int workers = 0);
[[nodiscard]] TraceEnsemble run_ensemble(const TimeVaryingModel& m, double p_e,
                                         std::uint64_t seed, int trials, long horizon,
                                         int workers = 0);

// Boundedness in the sup_n E[trace] sense, decided from two statistics:
// the slope of the mean log-trace (catches per-trajectory divergence) and a
// tail-index estimate of the pooled final-half traces (catches divergence of
// the ensemble mean when trajectories are recurrent but heavy-tailed).
[[nodiscard]] Classification classify_boundedness(const TraceEnsemble& ensemble);

// Classifies every grid point and reports the bracketing interval; one
// inconclusive gap between the bounded and divergent runs is tolerated.
[[nodiscard]] SweepResult sweep_threshold(const model::SystemSpec& spec,
                                          const std::vector<double>& grid, int trials,
                                          long horizon, std::uint64_t seed,
                                          int workers = 0);
[[nodiscard]] SweepResult sweep_threshold(const TimeVaryingModel& m,
                                          const std::vector<double>& grid, int trials,
                                          long horizon, std::uint64_t seed,
                                          int workers = 0);

// Worker-count resolution: explicit argument, else IKF_WORKERS, else
// hardware concurrency, clamped to [1, 64].
[[nodiscard]] int resolve_workers(int requested);

}  // namespace ikf::sim
