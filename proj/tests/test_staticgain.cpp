#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ikf/spectral.hpp"
#include "ikf/staticgain.hpp"

using namespace ikf;
using namespace ikf::staticgain;

namespace {

ComplexMatrix mat1(double v) {
  ComplexMatrix M(1, 1);
  M << v;
  return M;
}

}  // namespace

TEST_CASE("lifted radius in closed form for the scalar deadbeat gain") {
  const ComplexMatrix A = mat1(2.0);
  const ComplexMatrix C = mat1(1.0);
  const ComplexMatrix K = mat1(-2.0);  // A + KC = 0
  for (const double p : {0.1, 0.2, 0.2499, 0.2501}) {
    const auto r = erasure_lyapunov_radius(A, C, K, p);
    CHECK(r.spectral_radius == doctest::Approx(4.0 * p).epsilon(1e-14));
    CHECK(r.feasible == (4.0 * p < 1.0 - kEpsMargin));
  }
}

TEST_CASE("lifted radius endpoints: erased-only and never-erased") {
  ComplexMatrix A(2, 2), C(1, 2), K1(2, 1), K2(2, 1);
  A << 1.25, 0.0, 1.0, 1.1;
  C << 1.0, 1.0;
  K1 << -0.7, -0.3;
  K2 << 0.4, -1.2;

  // p_e = 1: the closed-loop term vanishes, so K is irrelevant.
  const double r1 = erasure_lyapunov_radius(A, C, K1, 1.0).spectral_radius;
  const double r2 = erasure_lyapunov_radius(A, C, K2, 1.0).spectral_radius;
  CHECK(r1 == doctest::Approx(1.25 * 1.25).epsilon(1e-12));
  CHECK(r2 == doctest::Approx(r1).epsilon(1e-12));

  // p_e = 0: the radius is rho(A + KC)^2.
  Eigen::ComplexEigenSolver<ComplexMatrix> es(A + K1 * C, false);
  const double rho_cl = es.eigenvalues().cwiseAbs().maxCoeff();
  CHECK(erasure_lyapunov_radius(A, C, K1, 0.0).spectral_radius ==
        doctest::Approx(rho_cl * rho_cl).epsilon(1e-12));
}

TEST_CASE("lifted radius is similarity invariant") {
  ComplexMatrix A(2, 2), C(1, 2), K(2, 1), T(2, 2);
  A << 1.25, 0.0, 1.0, 1.1;
  C << 1.0, 1.0;
  K << -0.7, -0.3;
  T << 1.0, 0.5, -0.25, 2.0;
  const ComplexMatrix Ti = T.inverse();

  const double direct = erasure_lyapunov_radius(A, C, K, 0.3).spectral_radius;
  const double rotated =
      erasure_lyapunov_radius(T * A * Ti, C * Ti, T * K, 0.3).spectral_radius;
  CHECK(rotated == doctest::Approx(direct).epsilon(1e-10));
}

TEST_CASE("lifted radius rejects malformed inputs") {
  const ComplexMatrix A = mat1(2.0);
  const ComplexMatrix C = mat1(1.0);
  const ComplexMatrix K = mat1(-2.0);
  CHECK_THROWS_AS((void)erasure_lyapunov_radius(ComplexMatrix::Ones(1, 2), C, K, 0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)erasure_lyapunov_radius(A, ComplexMatrix::Ones(1, 2), K, 0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)erasure_lyapunov_radius(A, C, ComplexMatrix::Ones(2, 1), 0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)erasure_lyapunov_radius(A, C, K, -0.1), std::invalid_argument);
  CHECK_THROWS_AS((void)erasure_lyapunov_radius(A, C, K, 1.1), std::invalid_argument);
}

TEST_CASE("lyapunov_stable is a strict spectral radius test") {
  CHECK(lyapunov_stable(mat1(0.999)));
  CHECK(!lyapunov_stable(mat1(1.0)));
  CHECK(!lyapunov_stable(mat1(2.0)));
  ComplexMatrix A(2, 2);
  A << 0.5, 10.0, 0.0, 0.9;  // non-normal but Schur-stable
  CHECK(lyapunov_stable(A));
}

TEST_CASE("stable plants are certified at every erasure rate") {
  ComplexMatrix A(2, 2), C(1, 2);
  A << 0.5, 0.2, 0.0, -0.8;
  C << 1.0, 0.0;
  const auto result = max_static_gain_erasure(A, C);
  CHECK(result.p_lower_bound == 1.0);
  CHECK(result.best_K.K.isZero(0.0));
  CHECK(!result.budget_exhausted);
}

TEST_CASE("scalar search bisects up to the exact threshold") {
  const auto result = max_static_gain_erasure(mat1(2.0), mat1(1.0));
  CHECK(result.p_lower_bound >= 0.245);
  CHECK(result.p_lower_bound < 0.25);
  CHECK(!result.budget_exhausted);
  // The reported gain certifies the reported rate.
  CHECK(erasure_lyapunov_radius(mat1(2.0), mat1(1.0), result.best_K.K,
                                result.p_lower_bound)
            .feasible);
}

TEST_CASE("static-gain bound never exceeds the exact critical threshold") {
  ComplexMatrix C(1, 2);
  C << 1.0, 1.0;
  const auto spec = model::diagonal_spec(
      {model::real_eigenvalue(2.0), model::real_eigenvalue(-2.0)}, C);
  SearchConfig cfg;
  cfg.bisect_tol = 5e-3;
  cfg.evals_per_pe = 900;
  cfg.restarts = 3;
  const auto result = max_static_gain_erasure(spec, cfg);
  const double exact = spectral::critical_erasure(spec).critical;
  CHECK(result.p_lower_bound > 0.0);
  CHECK(result.p_lower_bound <= exact + cfg.bisect_tol);
}

TEST_CASE("spec overload matches the raw-matrix form") {
  ComplexMatrix C(1, 1);
  C << 1.0;
  const auto spec = model::diagonal_spec({model::real_eigenvalue(2.0)}, C);
  const auto a = max_static_gain_erasure(spec);
  const auto b = max_static_gain_erasure(mat1(2.0), mat1(1.0));
  CHECK(a.p_lower_bound == b.p_lower_bound);
}
