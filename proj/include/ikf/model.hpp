#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ikf {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

namespace model {

// Default relative tolerance for rank decisions (scaled by max(rows, cols)
// and the largest singular value).
inline constexpr double kDefaultRankTol = 1e-9;
// Relative tolerance for magnitude equality inside cycles.
inline constexpr double kMagnitudeRelTol = 1e-9;

// Phase of a unit-modulus factor: either an exact rational multiple of 2*pi
// or an explicitly irrational angle in radians. Rational phases are stored in
// lowest terms with 0 <= num < den, so root-of-unity questions are answered
// with integer arithmetic, never floating comparison.
class Phase {
 public:
  Phase() = default;

  static Phase rational(std::int64_t num, std::int64_t den);
  static Phase irrational(double theta);

  [[nodiscard]] bool is_rational() const { return rational_; }
  [[nodiscard]] std::int64_t num() const { return num_; }
  [[nodiscard]] std::int64_t den() const { return den_; }
  [[nodiscard]] double radians() const;

  // Exact equality. A rational and an irrational phase never compare equal.
  friend bool operator==(const Phase& a, const Phase& b);
  friend bool operator!=(const Phase& a, const Phase& b) { return !(a == b); }

 private:
  bool rational_ = true;
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
  double theta_ = 0.0;
};

// (a - b) mod 1 as a reduced rational, when that difference is exactly
// known to be rational: both phases rational, or both irrational and equal
// (difference 0). Otherwise nullopt, meaning the ratio is not a root of
// unity for cycle purposes.
[[nodiscard]] std::optional<std::pair<std::int64_t, std::int64_t>>
rational_phase_difference(const Phase& a, const Phase& b);

struct Eigenvalue {
  double magnitude = 1.0;
  Phase phase;

  [[nodiscard]] Complex value() const;
};

// Real a as an Eigenvalue: phase 0 for a >= 0, phase 1/2 for a < 0.
[[nodiscard]] Eigenvalue real_eigenvalue(double a);
[[nodiscard]] Eigenvalue polar_eigenvalue(double magnitude, std::int64_t num,
                                          std::int64_t den);

// Same spectrum member: phases exactly equal, magnitudes within
// kMagnitudeRelTol relative.
[[nodiscard]] bool same_eigenvalue(const Eigenvalue& a, const Eigenvalue& b);
[[nodiscard]] bool same_magnitude(double a, double b);

struct JordanBlock {
  Eigenvalue eig;
  int size = 1;
};

// Block-diagonal Jordan matrix: eigenvalue on the diagonal, 1's on the
// superdiagonal within each block.
[[nodiscard]] ComplexMatrix matrix_from_jordan(
    const std::vector<JordanBlock>& blocks);

// Discrete-time intermittent system in Jordan coordinates.
// sigma / sigma_prime are the upper / lower noise-magnitude bounds; specs
// with sigma_prime = 0 are rejected (the analysis requires nondegenerate
// observation noise).
struct SystemSpec {
  std::vector<JordanBlock> blocks;
  ComplexMatrix B;  // m x g
  ComplexMatrix C;  // l x m
  double sigma = 1.0;
  double sigma_prime = 1.0;

  [[nodiscard]] int state_dim() const;
  [[nodiscard]] int output_dim() const { return static_cast<int>(C.rows()); }
  [[nodiscard]] ComplexMatrix A() const { return matrix_from_jordan(blocks); }
  // Column index of the first (dominant) coordinate of each Jordan block.
  [[nodiscard]] std::vector<int> first_positions() const;
  // Throws std::invalid_argument on dimension or noise-bound violations.
  void validate() const;
};

// Convenience builder: diagonal A from eigenvalues, B = I, given C rows.
[[nodiscard]] SystemSpec diagonal_spec(const std::vector<Eigenvalue>& eigs,
                                       const ComplexMatrix& C);

// Number of singular values exceeding rel_tol * max(rows, cols) * sigma_max.
// Zero matrices have rank 0. Throws std::invalid_argument on non-finite
// entries.
[[nodiscard]] int rank_with_tolerance(const ComplexMatrix& M, double rel_tol);

struct ObservabilityEntry {
  Eigenvalue eig;
  int block_count = 0;  // Jordan blocks carrying this eigenvalue
  int rank = 0;         // rank of the first-position columns of C
  bool observable = false;
};

// Per distinct eigenvalue: observable iff the columns of C at the first
// positions of its Jordan blocks have full column rank (= block count).
[[nodiscard]] std::vector<ObservabilityEntry> observable_eigen_report(
    const SystemSpec& spec, double rel_tol = kDefaultRankTol);

// Best continued-fraction convergent num/den of theta / 2*pi with
// den <= max_den, accepted when within tol of the target; otherwise the
// phase stays irrational (theta reduced mod 2*pi).
[[nodiscard]] Phase approximate_rational_phase(double theta,
                                               std::int64_t max_den,
                                               double tol);

}  // namespace model
}  // namespace ikf
