#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "ikf/rng.hpp"
#include "ikf/sim.hpp"

using namespace ikf;
using namespace ikf::sim;

namespace {

model::SystemSpec scalar2_spec() {
  ComplexMatrix C(1, 1);
  C << 1.0;
  return model::diagonal_spec({model::real_eigenvalue(2.0)}, C);
}

model::SystemSpec diag2m2_spec() {
  ComplexMatrix C(1, 2);
  C << 1.0, 1.0;
  return model::diagonal_spec({model::real_eigenvalue(2.0), model::real_eigenvalue(-2.0)},
                              C);
}

// Least-squares slope over the final half, matching the classifier's window.
double final_half_slope(const std::vector<double>& y) {
  const std::size_t first = y.size() / 2;
  const std::size_t n = y.size() - first;
  double xm = 0.5 * static_cast<double>(n - 1), ym = 0.0;
  for (std::size_t i = first; i < y.size(); ++i) ym += y[i];
  ym /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = first; i < y.size(); ++i) {
    const double dx = static_cast<double>(i - first) - xm;
    sxx += dx * dx;
    sxy += dx * (y[i] - ym);
  }
  return sxy / sxx;
}

ComplexMatrix random_psd(rng::SplitMix64& gen, int m) {
  ComplexMatrix G(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) G(i, j) = Complex(gen.next_gaussian(), gen.next_gaussian());
  return G * G.adjoint() + 1e-6 * ComplexMatrix::Identity(m, m);
}

bool loewner_geq(const ComplexMatrix& X, const ComplexMatrix& Y) {
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(X - Y, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().maxCoeff();
  return es.eigenvalues().minCoeff() >= -1e-9 * std::max(1.0, std::abs(hi));
}

constexpr double kStationaryTrace = 4.23606797749979;  // 2 + sqrt(5)

}  // namespace

TEST_CASE("make_model fills default noise covariances") {
  const DiscreteModel m = make_model(diag2m2_spec());
  CHECK(m.Q_full.isIdentity(0.0));
  CHECK(m.R.isIdentity(0.0));
  CHECK(m.A(0, 0) == Complex{2.0, 0.0});
  CHECK(m.A(1, 1).real() == doctest::Approx(-2.0).epsilon(1e-15));
}

TEST_CASE("scalar covariance step: erased and received updates") {
  const DiscreteModel m = make_model(scalar2_spec());
  CovarianceState s;
  s.sigma = ComplexMatrix::Identity(1, 1);

  const auto erased = kalman_covariance_step(s, false, m);
  CHECK(erased.sigma(0, 0).real() == 5.0);  // 4*1 + 1, exact
  CHECK(erased.step == 1);

  const auto received = kalman_covariance_step(s, true, m);
  CHECK(received.sigma(0, 0).real() == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(received.sigma(0, 0).imag() == 0.0);
}

TEST_CASE("explicit-noise overload checks Q and R shapes") {
  const auto spec = scalar2_spec();
  CovarianceState s;
  s.sigma = ComplexMatrix::Identity(1, 1);
  ComplexMatrix Q(1, 1), R(1, 1);
  Q << 2.0;
  R << 3.0;
  const auto erased = kalman_covariance_step(s, false, spec, Q, R);
  CHECK(erased.sigma(0, 0).real() == 6.0);
  const auto received = kalman_covariance_step(s, true, spec, Q, R);
  CHECK(received.sigma(0, 0).real() == doctest::Approx(5.0).epsilon(1e-14));

  CHECK_THROWS_AS((void)kalman_covariance_step(s, true, spec, ComplexMatrix::Identity(2, 2), R),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)kalman_covariance_step(s, true, spec, Q, ComplexMatrix::Identity(2, 2)),
                  std::invalid_argument);
}

TEST_CASE("covariance step rejects non-PSD and mismatched states") {
  const DiscreteModel m = make_model(scalar2_spec());
  CovarianceState s;
  s.sigma = -ComplexMatrix::Identity(1, 1);
  CHECK_THROWS_AS((void)kalman_covariance_step(s, true, m), std::invalid_argument);

  s.sigma = ComplexMatrix::Identity(2, 2);
  CHECK_THROWS_AS((void)kalman_covariance_step(s, true, m), std::invalid_argument);

  s.sigma = ComplexMatrix::Identity(1, 1) * std::nan("");
  CHECK_THROWS_AS((void)kalman_covariance_step(s, true, m), std::invalid_argument);
}

TEST_CASE("erasure-free recursion settles at the stationary covariance") {
  const DiscreteModel m = make_model(scalar2_spec());
  CovarianceState s;
  s.sigma = ComplexMatrix::Identity(1, 1);
  for (int i = 0; i < 200; ++i) s = kalman_covariance_step(s, true, m);
  CHECK(s.sigma(0, 0).real() == doctest::Approx(kStationaryTrace).epsilon(1e-12));
  CHECK(s.step == 200);
}

TEST_CASE("an erased step dominates a received step in the Loewner order") {
  const DiscreteModel m = make_model(diag2m2_spec());
  rng::SplitMix64 gen(42);
  for (int k = 0; k < 50; ++k) {
    CovarianceState s;
    s.sigma = random_psd(gen, 2);
    const auto er = kalman_covariance_step(s, false, m);
    const auto rc = kalman_covariance_step(s, true, m);
    CHECK(loewner_geq(er.sigma, rc.sigma));
  }
}

TEST_CASE("trials are deterministic in the seed and validate their inputs") {
  const DiscreteModel m = make_model(scalar2_spec());
  const auto a = run_trial(m, ErasureModel{0.3, 7}, 50);
  const auto b = run_trial(m, ErasureModel{0.3, 7}, 50);
  const auto c = run_trial(m, ErasureModel{0.3, 8}, 50);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  CHECK(a.values.size() == 50);

  CHECK_THROWS_AS((void)run_trial(m, ErasureModel{0.3, 7}, 0), std::invalid_argument);
  CHECK_THROWS_AS((void)run_trial(m, ErasureModel{-0.1, 7}, 50), std::invalid_argument);
  CHECK_THROWS_AS((void)run_trial(m, ErasureModel{1.1, 7}, 50), std::invalid_argument);
}

TEST_CASE("never-erased trials converge; always-erased trials overflow at log 4") {
  const auto spec = scalar2_spec();
  const auto quiet = run_trial(spec, ErasureModel{0.0, 1}, 600);
  CHECK(!quiet.overflow);
  for (std::size_t i = 450; i < quiet.values.size(); ++i) {
    CHECK(quiet.values[i] == doctest::Approx(kStationaryTrace).epsilon(1e-10));
  }

  const auto loud = run_trial(spec, ErasureModel{1.0, 1}, 600);
  CHECK(loud.overflow);
  CHECK(loud.values.back() == kOverflowGuard);
  CHECK(loud.values.size() == 600);
  // Pre-overflow growth rate is exactly one factor of |2|^2 per step.
  std::vector<double> logs;
  for (std::size_t i = 100; i < 300; ++i) logs.push_back(std::log(loud.values[i]));
  CHECK(final_half_slope(logs) == doctest::Approx(std::log(4.0)).epsilon(1e-3));
}

TEST_CASE("above threshold individual trajectories stay recurrent") {
  // At p_e = 0.35 > 1/4 the ensemble mean diverges, yet the per-trial
  // log-trace slope is positive only about half the time: single paths keep
  // collapsing back. This pins the regression guard for the heavy-tail
  // divergence mechanism; a per-path-divergent bug would push the fraction
  // toward 1.
  const DiscreteModel m = make_model(scalar2_spec());
  int positive = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    const auto tr = run_trial(m, ErasureModel{0.35, rng::stream_seed(1, t)}, 2000);
    std::vector<double> logs;
    logs.reserve(tr.values.size());
    for (const double v : tr.values) logs.push_back(std::log(std::max(v, 1e-300)));
    if (final_half_slope(logs) > 0.0) ++positive;
  }
  const double fraction = static_cast<double>(positive) / trials;
  CHECK(fraction >= 0.3);
  CHECK(fraction <= 0.7);
}

TEST_CASE("ensembles are invariant to the worker count") {
  const DiscreteModel m = make_model(diag2m2_spec());
  const auto one = run_ensemble(m, 0.2, 9, 37, 120, 1);
  const auto four = run_ensemble(m, 0.2, 9, 37, 120, 4);
  const auto many = run_ensemble(m, 0.2, 9, 37, 120, 16);
  REQUIRE(one.trials.size() == 37);
  for (std::size_t t = 0; t < one.trials.size(); ++t) {
    CHECK(one.trials[t].values == four.trials[t].values);
    CHECK(one.trials[t].values == many.trials[t].values);
  }
  CHECK(one.horizon == 120);
  CHECK(one.p_e == 0.2);
  CHECK_THROWS_AS((void)run_ensemble(m, 0.2, 9, 0, 120, 1), std::invalid_argument);
}

TEST_CASE("classification: converged, exploding and invalid ensembles") {
  const DiscreteModel m = make_model(scalar2_spec());

  const auto bounded = classify_boundedness(run_ensemble(m, 0.0, 1, 40, 600, 0));
  CHECK(bounded.verdict == Verdict::kBounded);
  CHECK(std::abs(bounded.mean_log_slope) < 1e-6);
  CHECK(!bounded.tail_alpha.has_value());  // converged traces have no tail

  const auto divergent = classify_boundedness(run_ensemble(m, 1.0, 1, 40, 600, 0));
  CHECK(divergent.verdict == Verdict::kDivergent);

  TraceEnsemble shallow;
  shallow.horizon = 400;
  shallow.trials.resize(1);
  shallow.trials[0].values.assign(400, 1.0);
  CHECK_THROWS_AS((void)classify_boundedness(shallow), std::invalid_argument);

  TraceEnsemble ragged;
  ragged.horizon = 500;
  ragged.trials.resize(1);
  ragged.trials[0].values.assign(300, 1.0);
  CHECK_THROWS_AS((void)classify_boundedness(ragged), std::invalid_argument);

  TraceEnsemble empty;
  empty.horizon = 500;
  CHECK_THROWS_AS((void)classify_boundedness(empty), std::invalid_argument);
}

TEST_CASE("near the threshold the classifier never lands on the wrong side") {
  const DiscreteModel m = make_model(scalar2_spec());
  // True threshold 0.25: definite verdicts just off it must point the right
  // way; inconclusive is acceptable there.
  const auto below = classify_boundedness(run_ensemble(m, 0.24, 1, 200, 2000, 0));
  CHECK(below.verdict != Verdict::kDivergent);
  const auto above = classify_boundedness(run_ensemble(m, 0.26, 1, 200, 2000, 0));
  CHECK(above.verdict != Verdict::kBounded);
}

TEST_CASE("threshold sweep brackets the scalar critical point") {
  std::vector<double> grid;
  for (int i = 1; i <= 9; ++i) grid.push_back(0.05 * i);
  const auto sweep = sweep_threshold(scalar2_spec(), grid, 200, 2000, 1);
  REQUIRE(sweep.classifications.size() == grid.size());
  CHECK(sweep.monotone);
  CHECK(sweep.interval_lo <= 0.25);
  CHECK(sweep.interval_hi >= 0.25);
  CHECK(sweep.interval_lo >= 0.1);   // well away from the degenerate default 0
  CHECK(sweep.interval_hi <= 0.40);  // and from the default 1
  CHECK(sweep.diagnostic.empty());
}

TEST_CASE("threshold sweep brackets the two-state cycle system") {
  const auto sweep = sweep_threshold(diag2m2_spec(), {0.03, 0.12}, 200, 2000, 1);
  CHECK(sweep.monotone);
  CHECK(sweep.interval_lo == 0.03);
  CHECK(sweep.interval_hi == 0.12);
}

TEST_CASE("sweeps over stable systems leave the upper endpoint open") {
  ComplexMatrix C(1, 1);
  C << 1.0;
  const auto spec = model::diagonal_spec({model::real_eigenvalue(0.5)}, C);
  const auto sweep = sweep_threshold(spec, {0.1, 0.4}, 30, 600, 1);
  CHECK(sweep.monotone);
  CHECK(sweep.interval_lo == 0.4);
  CHECK(sweep.interval_hi == 1.0);
}

TEST_CASE("sweep grids are validated") {
  const auto spec = scalar2_spec();
  CHECK_THROWS_AS((void)sweep_threshold(spec, {}, 10, 600, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)sweep_threshold(spec, {0.4, 0.2}, 10, 600, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)sweep_threshold(spec, {0.2, 0.2}, 10, 600, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)sweep_threshold(spec, {-0.1, 0.2}, 10, 600, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)sweep_threshold(spec, {0.2, 1.2}, 10, 600, 1),
                  std::invalid_argument);
}

TEST_CASE("time-varying wrapper agrees with the constant model") {
  const DiscreteModel m = make_model(diag2m2_spec());
  TimeVaryingModel tvm;
  for (int i = 0; i < 80; ++i) {
    tvm.A.push_back(m.A);
    tvm.C.push_back(m.C);
    tvm.Q_full.push_back(m.Q_full);
    tvm.R.push_back(m.R);
  }
  const auto fixed = run_trial(m, ErasureModel{0.3, 5}, 80);
  const auto varying = run_trial(tvm, ErasureModel{0.3, 5}, 80);
  CHECK(fixed.values == varying.values);

  CHECK_THROWS_AS((void)run_trial(tvm, ErasureModel{0.3, 5}, 81), std::invalid_argument);
  CHECK_THROWS_AS((void)tvm.at(-1), std::invalid_argument);
  CHECK_THROWS_AS((void)tvm.at(80), std::invalid_argument);
  tvm.C.pop_back();
  CHECK_THROWS_AS((void)run_trial(tvm, ErasureModel{0.3, 5}, 40), std::invalid_argument);
}

TEST_CASE("worker resolution: explicit, environment, hardware, clamped") {
  CHECK(resolve_workers(3) == 3);
  CHECK(resolve_workers(200) == 64);

  ::setenv("IKF_WORKERS", "5", 1);
  CHECK(resolve_workers(0) == 5);
  ::setenv("IKF_WORKERS", "200", 1);
  CHECK(resolve_workers(0) == 64);
  ::setenv("IKF_WORKERS", "garbage", 1);
  const int fallback = resolve_workers(0);
  CHECK(fallback >= 1);
  CHECK(fallback <= 64);
  ::unsetenv("IKF_WORKERS");
  const int hw = resolve_workers(0);
  CHECK(hw >= 1);
  CHECK(hw <= 64);
}
