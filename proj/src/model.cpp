#include "ikf/model.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ikf::model {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::int64_t positive_mod(std::int64_t a, std::int64_t m) {
  std::int64_t r = a % m;
  return r < 0 ? r + m : r;
}

}  // namespace

Phase Phase::rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw std::invalid_argument("rational phase with zero denominator");
  if (den < 0) {
    den = -den;
    num = -num;
  }
  num = positive_mod(num, den);
  const std::int64_t g = std::gcd(num, den);
  Phase p;
  p.rational_ = true;
  p.num_ = num / g;
  p.den_ = den / g;
  return p;
}

Phase Phase::irrational(double theta) {
  if (!std::isfinite(theta)) throw std::invalid_argument("non-finite phase");
  theta = std::fmod(theta, kTwoPi);
  if (theta < 0) theta += kTwoPi;
  Phase p;
  p.rational_ = false;
  p.theta_ = theta;
  return p;
}

double Phase::radians() const {
  return rational_ ? kTwoPi * static_cast<double>(num_) / static_cast<double>(den_)
                   : theta_;
}

bool operator==(const Phase& a, const Phase& b) {
  if (a.rational_ != b.rational_) return false;
  if (a.rational_) return a.num_ == b.num_ && a.den_ == b.den_;
  return a.theta_ == b.theta_;
}

std::optional<std::pair<std::int64_t, std::int64_t>> rational_phase_difference(
    const Phase& a, const Phase& b) {
  if (a.is_rational() && b.is_rational()) {
    // a - b = (na*db - nb*da) / (da*db), reduced and taken mod 1.
    const std::int64_t da = a.den(), db = b.den();
    const std::int64_t g = std::gcd(da, db);
    const std::int64_t den = da / g * db;  // lcm, fits: dens are user-scale
    std::int64_t num = a.num() * (den / da) - b.num() * (den / db);
    num = positive_mod(num, den);
    const std::int64_t r = std::gcd(num, den);
    return std::pair{num / r, den / r};
  }
  if (!a.is_rational() && !b.is_rational() && a == b) return std::pair{std::int64_t{0}, std::int64_t{1}};
  return std::nullopt;
}

Complex Eigenvalue::value() const {
  return std::polar(magnitude, phase.radians());
}

Eigenvalue real_eigenvalue(double a) {
  Eigenvalue e;
  e.magnitude = std::abs(a);
  e.phase = a < 0 ? Phase::rational(1, 2) : Phase::rational(0, 1);
  return e;
}

Eigenvalue polar_eigenvalue(double magnitude, std::int64_t num, std::int64_t den) {
  Eigenvalue e;
  e.magnitude = magnitude;
  e.phase = Phase::rational(num, den);
  return e;
}

bool same_magnitude(double a, double b) {
  return std::abs(a - b) <= kMagnitudeRelTol * std::max({1.0, std::abs(a), std::abs(b)});
}

bool same_eigenvalue(const Eigenvalue& a, const Eigenvalue& b) {
  return a.phase == b.phase && same_magnitude(a.magnitude, b.magnitude);
}

ComplexMatrix matrix_from_jordan(const std::vector<JordanBlock>& blocks) {
  int m = 0;
  for (const auto& b : blocks) {
    if (b.size < 1) throw std::invalid_argument("Jordan block size must be >= 1");
    m += b.size;
  }
  ComplexMatrix A = ComplexMatrix::Zero(m, m);
  int at = 0;
  for (const auto& b : blocks) {
    const Complex lambda = b.eig.value();
    for (int i = 0; i < b.size; ++i) {
      A(at + i, at + i) = lambda;
      if (i + 1 < b.size) A(at + i, at + i + 1) = 1.0;
    }
    at += b.size;
  }
  return A;
}

int SystemSpec::state_dim() const {
  int m = 0;
  for (const auto& b : blocks) m += b.size;
  return m;
}

std::vector<int> SystemSpec::first_positions() const {
  std::vector<int> pos;
  pos.reserve(blocks.size());
  int at = 0;
  for (const auto& b : blocks) {
    pos.push_back(at);
    at += b.size;
  }
  return pos;
}

void SystemSpec::validate() const {
  if (blocks.empty()) throw std::invalid_argument("spec has no Jordan blocks");
  for (const auto& b : blocks) {
    if (b.size < 1) throw std::invalid_argument("Jordan block size must be >= 1");
    if (!(b.eig.magnitude > 0))
      throw std::invalid_argument("zero eigenvalue: A must be invertible");
  }
  const int m = state_dim();
  if (C.cols() != m)
    throw std::invalid_argument("C has " + std::to_string(C.cols()) +
                                " columns, state dimension is " + std::to_string(m));
  if (C.rows() < 1) throw std::invalid_argument("C must have at least one row");
  if (B.rows() != m)
    throw std::invalid_argument("B has " + std::to_string(B.rows()) +
                                " rows, state dimension is " + std::to_string(m));
  if (B.cols() < 1) throw std::invalid_argument("B must have at least one column");
  if (!(sigma_prime > 0))
    throw std::invalid_argument("sigma_prime must be strictly positive");
  if (!(sigma >= sigma_prime))
    throw std::invalid_argument("sigma must be >= sigma_prime");
  if (!B.allFinite() || !C.allFinite())
    throw std::invalid_argument("non-finite entries in B or C");
}

SystemSpec diagonal_spec(const std::vector<Eigenvalue>& eigs, const ComplexMatrix& C) {
  SystemSpec spec;
  spec.blocks.reserve(eigs.size());
  for (const auto& e : eigs) spec.blocks.push_back({e, 1});
  spec.B = ComplexMatrix::Identity(static_cast<int>(eigs.size()),
                                   static_cast<int>(eigs.size()));
  spec.C = C;
  return spec;
}

int rank_with_tolerance(const ComplexMatrix& M, double rel_tol) {
  if (!(rel_tol > 0)) throw std::invalid_argument("rel_tol must be positive");
  if (M.size() == 0) return 0;
  if (!M.allFinite()) throw std::invalid_argument("non-finite matrix entries");
  Eigen::JacobiSVD<ComplexMatrix> svd(M);
  const auto& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  const double threshold =
      rel_tol * static_cast<double>(std::max(M.rows(), M.cols())) * smax;
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > threshold) ++rank;
  return rank;
}

std::vector<ObservabilityEntry> observable_eigen_report(const SystemSpec& spec,
                                                        double rel_tol) {
  spec.validate();
  const std::vector<int> firsts = spec.first_positions();
  std::vector<ObservabilityEntry> report;
  std::vector<std::vector<int>> member_columns;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const Eigenvalue& eig = spec.blocks[i].eig;
    bool merged = false;
    for (std::size_t k = 0; k < report.size(); ++k) {
      if (same_eigenvalue(report[k].eig, eig)) {
        member_columns[k].push_back(firsts[i]);
        merged = true;
        break;
      }
    }
    if (!merged) {
      report.push_back({eig, 0, 0, false});
      member_columns.push_back({firsts[i]});
    }
  }
  for (std::size_t k = 0; k < report.size(); ++k) {
    const auto& cols = member_columns[k];
    ComplexMatrix Cl(spec.C.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) Cl.col(static_cast<Eigen::Index>(j)) = spec.C.col(cols[j]);
    report[k].block_count = static_cast<int>(cols.size());
    report[k].rank = rank_with_tolerance(Cl, rel_tol);
    report[k].observable = report[k].rank == report[k].block_count;
  }
  return report;
}

Phase approximate_rational_phase(double theta, std::int64_t max_den, double tol) {
  if (max_den < 1) throw std::invalid_argument("max_den must be >= 1");
  if (!(tol > 0)) throw std::invalid_argument("tol must be positive");
  if (!std::isfinite(theta)) throw std::invalid_argument("non-finite phase");
  double x = std::fmod(theta / kTwoPi, 1.0);
  if (x < 0) x += 1.0;

  // Continued-fraction convergents h/k of x. Denominators strictly increase,
  // so the last convergent with k <= max_den is the best one available.
  std::int64_t h_m2 = 0, k_m2 = 1;
  std::int64_t h_m1 = 1, k_m1 = 0;
  std::int64_t best_h = 0, best_k = 1;
  double y = x;
  for (int iter = 0; iter < 64; ++iter) {
    const double a_f = std::floor(y);
    if (a_f > 4.0e18) break;
    const auto a = static_cast<std::int64_t>(a_f);
    if (k_m1 > 0 && a > (max_den - k_m2) / k_m1) break;  // next k would exceed max_den
    const std::int64_t h = a * h_m1 + h_m2;
    const std::int64_t k = a * k_m1 + k_m2;
    best_h = h;
    best_k = k;
    const double rem = y - a_f;
    if (rem < 1e-15) break;  // x is (numerically) exactly h/k
    y = 1.0 / rem;
    h_m2 = h_m1;
    k_m2 = k_m1;
    h_m1 = h;
    k_m1 = k;
  }
  if (std::abs(x - static_cast<double>(best_h) / static_cast<double>(best_k)) <= tol)
    return Phase::rational(best_h, best_k);
  return Phase::irrational(theta);
}

}  // namespace ikf::model
