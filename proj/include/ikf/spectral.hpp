#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ikf/model.hpp"

namespace ikf::spectral {

// Enumeration cap on the cycle period for the single-channel rank search.
inline constexpr std::int64_t kMaxPeriod = 24;
// Budget on survivor patterns tested by the parallel-channel search.
inline constexpr std::uint64_t kParallelPatternBudget = std::uint64_t{1} << 20;

// Thrown when a cycle period or pattern budget exceeds the enumeration caps.
// The CLI maps this to its "analysis infeasible" exit code.
class EnumerationCapError : public std::runtime_error {
 public:
  explicit EnumerationCapError(const std::string& what) : std::runtime_error(what) {}
};

struct CycleMember {
  model::Eigenvalue eig;
  std::vector<int> block_indices;  // positions in spec.blocks
};

// Maximal set of equal-magnitude eigenvalues whose pairwise ratios are roots
// of unity. nu counts Jordan blocks across members (one Gramian column per
// block); p is the minimal n with (lambda_i/lambda_j)^n = 1 for all pairs.
struct EigenvalueCycle {
  std::vector<CycleMember> members;
  int nu = 0;
  std::int64_t p = 1;
  int l = -1;  // erasure budget, -1 until computed

  [[nodiscard]] double magnitude() const { return members.front().eig.magnitude; }
  [[nodiscard]] std::vector<int> all_block_indices() const;
};

struct CriticalReport {
  std::vector<EigenvalueCycle> cycles;      // sorted: |lambda| desc, p asc, input order
  std::vector<double> per_cycle_threshold;  // clamped to [0, 1]
  double critical = 1.0;
  int bottleneck_cycle = -1;
  bool unobservable_unstable = false;
  bool all_stable = false;
};

struct ParallelSpec {
  std::vector<model::JordanBlock> blocks;
  ComplexMatrix B;
  std::vector<ComplexMatrix> channels;  // each l_j x m
  std::vector<double> erasure_probs;    // in [0, 1], one per channel
  double sigma = 1.0;
  double sigma_prime = 1.0;

  [[nodiscard]] int state_dim() const;
  void validate() const;
};

struct ParallelReport {
  bool stable = false;
  double margin = 0.0;  // 1 - worst-case product
  int binding_cycle = -1;
  std::vector<int> binding_cardinalities;  // erased-slot counts per channel
};

// Unique partition into maximal cycles. Eigenvalues with irrational phase
// differences or differing magnitudes never share a cycle; a singleton has
// p = 1. Sorted by |lambda| descending, then smaller p, then input order.
[[nodiscard]] std::vector<EigenvalueCycle> partition_cycles(
    const model::SystemSpec& spec);

// Columns of C at the first positions of the cycle's Jordan blocks, ordered
// as the cycle's expanded block list (the C_i the rank search runs on).
[[nodiscard]] ComplexMatrix restrict_columns(const model::SystemSpec& spec,
                                             const EigenvalueCycle& cycle);

// Minimum number of erased slots S' in {0..p-1} whose removal drops the
// stacked Gramian rows C_i * A_i^s (s surviving) below rank nu. Rows are
// normalized by |lambda|^s unless normalize_rows is false (rank-invariant
// either way; the flag exists for the invariance test). Returns 0 for an
// unobservable cycle. Throws EnumerationCapError when p > max_period.
[[nodiscard]] int compute_l(const EigenvalueCycle& cycle, const ComplexMatrix& Ci,
                            double rel_tol = model::kDefaultRankTol,
                            bool normalize_rows = true,
                            std::int64_t max_period = kMaxPeriod);

// Exact critical erasure probability: per-cycle thresholds
// 1/|lambda|^(2 p/l) with the conventions l=0 & |lambda|>=1 -> 0 and
// l=0 & |lambda|<1 -> clamped to 1; critical is the minimum, in [0, 1].
[[nodiscard]] CriticalReport critical_erasure(
    const model::SystemSpec& spec, double rel_tol = model::kDefaultRankTol,
    std::int64_t max_period = kMaxPeriod);

// 1/|lambda_max|^2 when every cycle has period 1; nullopt otherwise.
[[nodiscard]] std::optional<double> critical_no_cycle_fastpath(
    const model::SystemSpec& spec);

// Parallel erasure channels: stable iff for every cycle and every minimal
// rank-killing cardinality vector (l_1..l_d),
// prod_j p_e_j^(l_j/p) * |lambda|^2 < 1.
[[nodiscard]] ParallelReport parallel_stability_margin(
    const ParallelSpec& pspec, double rel_tol = model::kDefaultRankTol);

// Threshold envelope: (1/prod_unstable |lambda_i|^2, 1/|lambda_max|^2), the
// product counting algebraic multiplicity.
[[nodiscard]] std::pair<double, double> bound_sandwich(const model::SystemSpec& spec);

}  // namespace ikf::spectral
