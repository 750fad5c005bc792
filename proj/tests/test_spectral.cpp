#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "ikf/spectral.hpp"

using namespace ikf;
using namespace ikf::model;
using namespace ikf::spectral;

namespace {

SystemSpec scalar2() {
  ComplexMatrix C(1, 1);
  C << 1.0;
  return diagonal_spec({real_eigenvalue(2.0)}, C);
}

SystemSpec diag2m2() {
  ComplexMatrix C(1, 2);
  C << 1.0, 1.0;
  return diagonal_spec({real_eigenvalue(2.0), real_eigenvalue(-2.0)}, C);
}

SystemSpec diag3_2m2() {
  ComplexMatrix C(1, 3);
  C << 1.0, 1.0, 1.0;
  return diagonal_spec(
      {real_eigenvalue(3.0), real_eigenvalue(2.0), real_eigenvalue(-2.0)}, C);
}

// Composite-period cycle: phase differences 1/16 and 8/16 force p = 16.
SystemSpec composite16() {
  ComplexMatrix C(1, 3);
  C << 1.0, 1.0, 1.0;
  return diagonal_spec({polar_eigenvalue(2.0, 0, 1), polar_eigenvalue(2.0, 1, 16),
                        polar_eigenvalue(2.0, 9, 16)},
                       C);
}

// Two-output spec whose second channel sees only the last mode, scaled by delta.
SystemSpec delta_spec(double delta) {
  ComplexMatrix C(2, 4);
  C << 1.0, 2.0, 3.0, 4.0, 0.0, 0.0, 0.0, delta;
  return diagonal_spec({polar_eigenvalue(2.0, 0, 5), polar_eigenvalue(2.0, 1, 5),
                        polar_eigenvalue(2.0, 2, 5), polar_eigenvalue(2.0, 3, 5)},
                       C);
}

}  // namespace

TEST_CASE("partition_cycles groups root-of-unity ratios at equal magnitude") {
  const auto single = partition_cycles(scalar2());
  REQUIRE(single.size() == 1);
  CHECK(single[0].nu == 1);
  CHECK(single[0].p == 1);

  const auto pair = partition_cycles(diag2m2());
  REQUIRE(pair.size() == 1);
  CHECK(pair[0].nu == 2);
  CHECK(pair[0].p == 2);

  const auto comp = partition_cycles(composite16());
  REQUIRE(comp.size() == 1);
  CHECK(comp[0].nu == 3);
  CHECK(comp[0].p == 16);
}

TEST_CASE("cycles sort by magnitude, then period, then input order") {
  const auto cycles = partition_cycles(diag3_2m2());
  REQUIRE(cycles.size() == 2);
  CHECK(cycles[0].magnitude() == doctest::Approx(3.0));
  CHECK(cycles[0].p == 1);
  CHECK(cycles[1].magnitude() == doctest::Approx(2.0));
  CHECK(cycles[1].p == 2);
  CHECK(cycles[1].all_block_indices() == std::vector<int>{1, 2});
}

TEST_CASE("irrational phase differences and unequal magnitudes split cycles") {
  ComplexMatrix C(1, 2);
  C << 1.0, 1.0;

  const auto split = partition_cycles(diagonal_spec(
      {polar_eigenvalue(2.0, 0, 1), Eigenvalue{2.0, Phase::irrational(1.0)}}, C));
  REQUIRE(split.size() == 2);
  CHECK(split[0].p == 1);
  CHECK(split[1].p == 1);

  // Equal irrational phases have ratio exactly 1, hence one cycle.
  const auto matched = partition_cycles(diagonal_spec(
      {Eigenvalue{2.0, Phase::irrational(1.0)}, Eigenvalue{2.0, Phase::irrational(1.0)}},
      C));
  REQUIRE(matched.size() == 1);
  CHECK(matched[0].nu == 2);
  CHECK(matched[0].p == 1);

  const auto mags = partition_cycles(diagonal_spec(
      {real_eigenvalue(2.0), real_eigenvalue(2.0 + 1e-6)}, C));
  CHECK(mags.size() == 2);
}

TEST_CASE("Jordan blocks of one eigenvalue enter the same cycle once each") {
  SystemSpec spec;
  spec.blocks = {{real_eigenvalue(2.0), 2}, {real_eigenvalue(-2.0), 1}};
  spec.B = ComplexMatrix::Identity(3, 3);
  spec.C = ComplexMatrix(2, 3);
  spec.C << 1.0, 0.0, 1.0, 0.0, 1.0, 1.0;
  const auto cycles = partition_cycles(spec);
  REQUIRE(cycles.size() == 1);
  CHECK(cycles[0].nu == 2);  // one Gramian column per block, not per state
  CHECK(cycles[0].p == 2);
}

TEST_CASE("restrict_columns picks first-position columns in cycle order") {
  const auto spec = diag3_2m2();
  const auto cycles = partition_cycles(spec);
  const ComplexMatrix Ci = restrict_columns(spec, cycles[1]);
  REQUIRE(Ci.rows() == 1);
  REQUIRE(Ci.cols() == 2);
  CHECK(Ci(0, 0) == Complex{1.0, 0.0});
  CHECK(Ci(0, 1) == Complex{1.0, 0.0});
}

TEST_CASE("erasure budget l on the reference cycles") {
  auto l_of = [](const SystemSpec& spec, std::size_t idx) {
    const auto cycles = partition_cycles(spec);
    return compute_l(cycles[idx], restrict_columns(spec, cycles[idx]));
  };
  CHECK(l_of(scalar2(), 0) == 1);
  CHECK(l_of(diag2m2(), 0) == 1);
  CHECK(l_of(composite16(), 0) == 8);
  CHECK(l_of(delta_spec(1.0), 0) == 3);
  CHECK(l_of(delta_spec(0.0), 0) == 2);
}

TEST_CASE("erasure budget vanishes exactly for unobservable cycles") {
  ComplexMatrix C(1, 2);
  C << 1.0, 1.0;
  const auto spec = diagonal_spec({real_eigenvalue(2.0), real_eigenvalue(2.0)}, C);
  const auto cycles = partition_cycles(spec);
  REQUIRE(cycles.size() == 1);
  CHECK(cycles[0].nu == 2);
  CHECK(compute_l(cycles[0], restrict_columns(spec, cycles[0])) == 0);
}

TEST_CASE("l is invariant under row normalization, row scaling and block order") {
  const auto spec = composite16();
  const auto cycles = partition_cycles(spec);
  const ComplexMatrix Ci = restrict_columns(spec, cycles[0]);
  CHECK(compute_l(cycles[0], Ci, kDefaultRankTol, true) ==
        compute_l(cycles[0], Ci, kDefaultRankTol, false));
  CHECK(compute_l(cycles[0], 1e6 * Ci) == compute_l(cycles[0], Ci));

  // Permuting the Jordan blocks permutes nothing observable.
  ComplexMatrix C(1, 3);
  C << 1.0, 1.0, 1.0;
  const auto permuted = diagonal_spec({polar_eigenvalue(2.0, 9, 16),
                                       polar_eigenvalue(2.0, 0, 1),
                                       polar_eigenvalue(2.0, 1, 16)},
                                      C);
  CHECK(critical_erasure(permuted).critical ==
        doctest::Approx(critical_erasure(spec).critical).epsilon(1e-14));
}

TEST_CASE("enumeration caps bound the rank search") {
  ComplexMatrix C(1, 2);
  C << 1.0, 1.0;
  // Period 29 exceeds the default cap of 24.
  const auto big = diagonal_spec({polar_eigenvalue(2.0, 0, 1), polar_eigenvalue(2.0, 1, 29)}, C);
  CHECK_THROWS_AS((void)critical_erasure(big), EnumerationCapError);

  // An explicit lower cap rejects the 16-cycle.
  CHECK_THROWS_AS((void)critical_erasure(composite16(), kDefaultRankTol, 8),
                  EnumerationCapError);
  CHECK_NOTHROW((void)critical_erasure(composite16(), kDefaultRankTol, 16));

  const auto cycles = partition_cycles(composite16());
  CHECK_THROWS_AS((void)compute_l(cycles[0], restrict_columns(composite16(), cycles[0]),
                                  kDefaultRankTol, true, 0),
                  std::invalid_argument);
}

TEST_CASE("critical erasure probability on the reference systems") {
  CHECK(critical_erasure(scalar2()).critical == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(critical_erasure(diag2m2()).critical == doctest::Approx(0.0625).epsilon(1e-12));
  CHECK(critical_erasure(composite16()).critical == doctest::Approx(0.0625).epsilon(1e-12));
  CHECK(critical_erasure(delta_spec(1.0)).critical ==
        doctest::Approx(std::pow(2.0, -10.0 / 3.0)).epsilon(1e-12));
  CHECK(critical_erasure(delta_spec(0.0)).critical ==
        doctest::Approx(std::pow(2.0, -5.0)).epsilon(1e-12));
}

TEST_CASE("the slowest admissible cycle is the bottleneck") {
  const auto report = critical_erasure(diag3_2m2());
  REQUIRE(report.cycles.size() == 2);
  REQUIRE(report.per_cycle_threshold.size() == 2);
  CHECK(report.per_cycle_threshold[0] == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  CHECK(report.per_cycle_threshold[1] == doctest::Approx(0.0625).epsilon(1e-12));
  CHECK(report.bottleneck_cycle == 1);
  CHECK(report.critical == doctest::Approx(0.0625).epsilon(1e-12));
  CHECK(!report.unobservable_unstable);
  CHECK(!report.all_stable);
}

TEST_CASE("stability and observability conventions") {
  ComplexMatrix C(1, 2);
  C << 1.0, 1.0;

  // Every mode stable: no erasure rate can destabilize the estimator.
  const auto stable = critical_erasure(
      diagonal_spec({real_eigenvalue(0.5), real_eigenvalue(-0.5)}, C));
  CHECK(stable.all_stable);
  CHECK(stable.critical == 1.0);

  // Unobservable unstable cycle: nothing helps.
  const auto lost = critical_erasure(
      diagonal_spec({real_eigenvalue(2.0), real_eigenvalue(2.0)}, C));
  CHECK(lost.unobservable_unstable);
  CHECK(lost.critical == 0.0);

  // Unobservable but stable: threshold clamps to 1.
  const auto benign = critical_erasure(
      diagonal_spec({real_eigenvalue(0.5), real_eigenvalue(0.5)}, C));
  CHECK(!benign.unobservable_unstable);
  CHECK(benign.critical == 1.0);

  // A stable cycle never drags the minimum below the unstable one's threshold.
  const auto mixed = critical_erasure(
      diagonal_spec({real_eigenvalue(3.0), real_eigenvalue(0.5)}, C));
  CHECK(mixed.critical == doctest::Approx(1.0 / 9.0).epsilon(1e-12));

  for (const auto& report : {stable, lost, benign, mixed}) {
    for (const double t : report.per_cycle_threshold) {
      CHECK(t >= 0.0);
      CHECK(t <= 1.0);
    }
  }
}

TEST_CASE("period-1 fast path matches the full analysis") {
  ComplexMatrix C(1, 2);
  C << 1.0, 1.0;
  const auto spec = diagonal_spec({real_eigenvalue(3.0), real_eigenvalue(2.0)}, C);
  const auto fast = critical_no_cycle_fastpath(spec);
  REQUIRE(fast.has_value());
  CHECK(*fast == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
  CHECK(*fast == doctest::Approx(critical_erasure(spec).critical).epsilon(1e-12));

  CHECK(!critical_no_cycle_fastpath(diag2m2()).has_value());
}

TEST_CASE("sandwich bounds bracket the exact threshold") {
  const auto [lo3, hi3] = bound_sandwich(diag3_2m2());
  CHECK(lo3 == doctest::Approx(1.0 / 144.0).epsilon(1e-12));
  CHECK(hi3 == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  CHECK(lo3 <= critical_erasure(diag3_2m2()).critical);
  CHECK(critical_erasure(diag3_2m2()).critical <= hi3);

  // For a scalar system all three collapse.
  const auto [lo1, hi1] = bound_sandwich(scalar2());
  CHECK(lo1 == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(hi1 == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("parallel channels: single-channel case reduces to the scalar margin") {
  ParallelSpec pspec;
  pspec.blocks = {{real_eigenvalue(2.0), 1}, {real_eigenvalue(-2.0), 1}};
  pspec.B = ComplexMatrix::Identity(2, 2);
  ComplexMatrix C1(1, 2);
  C1 << 1.0, 1.0;
  pspec.channels = {C1};
  pspec.erasure_probs = {0.03};

  const auto rep = parallel_stability_margin(pspec);
  CHECK(rep.stable);
  CHECK(rep.margin == doctest::Approx(1.0 - 4.0 * std::sqrt(0.03)).epsilon(1e-12));
  CHECK(rep.binding_cardinalities == std::vector<int>{1});

  pspec.erasure_probs = {0.08};  // above the 1/16 threshold
  const auto bad = parallel_stability_margin(pspec);
  CHECK(!bad.stable);
  CHECK(bad.margin < 0.0);
}

TEST_CASE("parallel channels: complementary channels need one erasure in each") {
  ParallelSpec pspec;
  pspec.blocks = {{real_eigenvalue(2.0), 1}, {real_eigenvalue(-2.0), 1}};
  pspec.B = ComplexMatrix::Identity(2, 2);
  ComplexMatrix C1(1, 2), C2(1, 2);
  C1 << 1.0, 1.0;
  C2 << 1.0, -1.0;
  pspec.channels = {C1, C2};
  pspec.erasure_probs = {0.03, 0.03};

  const auto rep = parallel_stability_margin(pspec);
  CHECK(rep.stable);
  // Worst minimal pattern erases one slot per channel: 0.03^(1/2) twice.
  CHECK(rep.margin == doctest::Approx(1.0 - 4.0 * 0.03).epsilon(1e-12));
  CHECK(rep.binding_cardinalities == std::vector<int>{1, 1});
  CHECK(rep.binding_cycle == 0);
}

TEST_CASE("parallel spec validation") {
  ParallelSpec pspec;
  pspec.blocks = {{real_eigenvalue(2.0), 1}};
  pspec.B = ComplexMatrix::Identity(1, 1);
  ComplexMatrix C1(1, 1);
  C1 << 1.0;
  pspec.channels = {C1};
  pspec.erasure_probs = {0.1, 0.2};  // count mismatch
  CHECK_THROWS_AS(pspec.validate(), std::invalid_argument);

  pspec.erasure_probs = {1.5};
  CHECK_THROWS_AS(pspec.validate(), std::invalid_argument);

  pspec.erasure_probs = {0.1};
  CHECK_NOTHROW(pspec.validate());
}

TEST_CASE("parallel pattern budget throws instead of silently truncating") {
  // Period-24 cycle observable through one wide row: killing its rank takes
  // 23 erasures, and the pattern count blows the budget long before that.
  ParallelSpec pspec;
  pspec.blocks = {{polar_eigenvalue(2.0, 0, 1), 1}, {polar_eigenvalue(2.0, 1, 24), 1}};
  pspec.B = ComplexMatrix::Identity(2, 2);
  ComplexMatrix C1(1, 2);
  C1 << 1.0, 1.0;
  pspec.channels = {C1};
  pspec.erasure_probs = {0.5};
  CHECK_THROWS_AS((void)parallel_stability_margin(pspec), EnumerationCapError);
}
