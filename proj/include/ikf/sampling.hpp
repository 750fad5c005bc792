#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ikf/model.hpp"
#include "ikf/sim.hpp"
#include "ikf/spectral.hpp"

namespace ikf::sampling {

// Quadrature grid step for the noise-covariance Wiener integrals, as a
// fraction of the sampling interval.
inline constexpr int kQuadratureDivisions = 512;

// Continuous eigenvalue re + j*im attached to a Jordan block.
struct ContinuousBlock {
  double re = 0.0;
  double im = 0.0;
  int size = 1;
};

// Continuous-time plant dx = A_c x dt + B_c dw, integrating sampler output
// y[n] over windows of length I offset by the jitter t_n.
struct ContinuousSpec {
  std::vector<ContinuousBlock> blocks;
  ComplexMatrix B_c;  // m x g
  ComplexMatrix C_c;  // l x m
  ComplexMatrix D_c;  // l x l, invertible
  double I = 1.0;     // sampling interval, > 0
  double T = 0.0;     // jitter window, >= 0

  [[nodiscard]] Eigen::Index state_dim() const;
  [[nodiscard]] Eigen::Index output_dim() const { return C_c.rows(); }
  [[nodiscard]] ComplexMatrix A_c() const;
  void validate() const;
};

enum class JitterMode {
  kNone,
  kIidUniform,
  kGeneralDensity,
  kWeylSqrt2,
  kIntervalVariant,
};

[[nodiscard]] std::string to_string(JitterMode mode);

// Piecewise-constant density on [0, support_hi] with equal-width bins.
struct DensityDescriptor {
  std::vector<double> weights;
  double support_hi = 0.0;
};

struct JitterSequence {
  JitterMode mode = JitterMode::kNone;
  std::vector<double> values;  // t_n for n = 1..count, each in [0, T]
};

struct DiscretizationResult {
  sim::TimeVaryingModel model;
  // Observation windows overlap state-propagation intervals; those Wiener
  // cross-covariances are dropped. Thresholds do not depend on bounded noise
  // covariances, so this cannot move the quantity under test.
  bool cross_correlation_zeroed = false;
};

struct ContinuousCritical {
  double critical = 1.0;
  bool unobservable_unstable = false;
};

struct ComparisonRecord {
  double analytic_uniform = 0.0;     // from the uniformly sampled cycle analysis
  double analytic_nonuniform = 0.0;  // from the largest real part
  bool unobservable_unstable = false;
  sim::SweepResult uniform_sweep;
  sim::SweepResult nonuniform_sweep;
  bool cross_correlation_zeroed = false;
};

// Block-diagonal e^{A_c t}: each k x k block has entry (i, i+d) equal to
// t^d/d! * e^{lambda t}.
[[nodiscard]] ComplexMatrix jordan_expm(const std::vector<ContinuousBlock>& blocks,
                                        double t);

// C_c * F(w) with F(w) = integral of e^{A_c u} du over [-w, 0], evaluated in
// closed form per Jordan block. integrated_C(cspec) is the window-length-I
// observation matrix; the window variant serves the per-sample recomputation.
[[nodiscard]] ComplexMatrix integrated_window(const ContinuousSpec& cspec, double w);
[[nodiscard]] ComplexMatrix integrated_C(const ContinuousSpec& cspec);

// Deterministic given seed; weyl mode ignores the seed (t_n = T frac(sqrt2 n),
// n starting at 1). interval_variant draws i.i.d. uniforms; the mode tag
// selects the window-variant discretization.
[[nodiscard]] JitterSequence sample_jitter(JitterMode mode, int n, double T,
                                           std::uint64_t seed,
                                           const DensityDescriptor& density = {});

// Time-varying discrete model over `horizon` samples. Start-jitter modes
// sample at nI - t_n: the state propagates by the elapsed time between
// consecutive instants and the observation matrix is the fixed integrated_C.
// interval_variant samples at nI over windows [(n-1)I - t_n, nI]: the
// observation matrix is recomputed per sample with window length I + t_n.
// Noise covariances come from fine-grid quadrature of the Wiener integrals
// at step I/512. Throws when consecutive sample instants fail to advance.
[[nodiscard]] DiscretizationResult discretize_nonuniform(const ContinuousSpec& cspec,
                                                         const JitterSequence& jitter,
                                                         long horizon);

// Nonuniform-sampling threshold: e^{-2 Re(lambda_max) I} clamped to [0,1],
// or 0 with the flag when (A_c, integrated_C) has an unobservable eigenvalue
// with nonnegative real part.
[[nodiscard]] ContinuousCritical continuous_critical(const ContinuousSpec& cspec);

// y'[n] = alpha[n] y[n] + alpha_prime[n] y[n-1], with y[-1] = 0.
[[nodiscard]] std::vector<ComplexVector> apply_time_varying_filter(
    const std::vector<ComplexVector>& y, const std::vector<double>& alpha,
    const std::vector<double>& alpha_prime);

// Uniformly sampled discrete system as a Jordan-structured spec: block
// J_k(lambda) maps to J_k(e^{lambda I}) with the observation matrix rotated
// into that Jordan basis; phases e^{j im I} within tol of a rational multiple
// of 2pi (denominator <= max_den) become exact rationals for cycle analysis.
[[nodiscard]] model::SystemSpec sampled_spec(const ContinuousSpec& cspec,
                                             std::int64_t max_den = 64,
                                             double tol = 1e-9);

// Runs the threshold sweep on the zero-jitter and jittered discretizations
// and pairs both empirical intervals with the analytic thresholds.
[[nodiscard]] ComparisonRecord uniform_vs_nonuniform_report(
    const ContinuousSpec& cspec, const std::vector<double>& p_e_grid, int trials,
    long horizon, JitterMode mode = JitterMode::kWeylSqrt2, std::uint64_t seed = 1,
    int workers = 0);

}  // namespace ikf::sampling
