#include "ikf/sampling.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "ikf/rng.hpp"

namespace ikf::sampling {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Complex block_lambda(const ContinuousBlock& b) { return Complex(b.re, b.im); }

// g_d(w) = integral of u^d e^{lambda u} du over [-w, 0]. Series for small
// |lambda w| (the closed recursion cancels catastrophically there), else the
// integration-by-parts recursion.
std::vector<Complex> power_exp_integrals(Complex lambda, double w, int count) {
  std::vector<Complex> g(static_cast<std::size_t>(count));
  const double scale = std::abs(lambda) * w;
  if (scale < 0.5) {
    for (int d = 0; d < count; ++d) {
      // g_d = sum_j lambda^j/j! * (-(-w)^{d+j+1}/(d+j+1)).
      Complex sum = 0.0;
      Complex coeff = 1.0;  // lambda^j / j!
      double wpow = -std::pow(-w, d + 1);
      for (int j = 0; j < 60; ++j) {
        const Complex term = coeff * (wpow / static_cast<double>(d + j + 1));
        sum += term;
        if (std::abs(term) < 1e-18 * (1.0 + std::abs(sum))) break;
        coeff *= lambda / static_cast<double>(j + 1);
        wpow *= -w;
      }
      g[static_cast<std::size_t>(d)] = sum;
    }
    return g;
  }
  const Complex e = std::exp(-lambda * w);
  g[0] = (1.0 - e) / lambda;
  double wpow = 1.0;  // (-w)^d
  for (int d = 1; d < count; ++d) {
    wpow *= -w;
    g[static_cast<std::size_t>(d)] =
        (-wpow * e - static_cast<double>(d) * g[static_cast<std::size_t>(d - 1)]) /
        lambda;
  }
  return g;
}

// F(w) = integral of e^{A_c u} du over [-w, 0], block diagonal.
ComplexMatrix integral_expm(const std::vector<ContinuousBlock>& blocks, double w) {
  Eigen::Index m = 0;
  for (const auto& b : blocks) m += b.size;
  ComplexMatrix F = ComplexMatrix::Zero(m, m);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    const auto g = power_exp_integrals(block_lambda(b), w, b.size);
    double fact = 1.0;
    for (int d = 0; d < b.size; ++d) {
      if (d > 0) fact *= static_cast<double>(d);
      for (int i = 0; i + d < b.size; ++i) {
        F(at + i, at + i + d) = g[static_cast<std::size_t>(d)] / fact;
      }
    }
    at += b.size;
  }
  return F;
}

std::uint64_t double_key(double v) { return std::bit_cast<std::uint64_t>(v); }

}  // namespace

Eigen::Index ContinuousSpec::state_dim() const {
  Eigen::Index m = 0;
  for (const auto& b : blocks) m += b.size;
  return m;
}

ComplexMatrix ContinuousSpec::A_c() const {
  const Eigen::Index m = state_dim();
  ComplexMatrix A = ComplexMatrix::Zero(m, m);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    for (int i = 0; i < b.size; ++i) {
      A(at + i, at + i) = block_lambda(b);
      if (i + 1 < b.size) A(at + i, at + i + 1) = 1.0;
    }
    at += b.size;
  }
  return A;
}

void ContinuousSpec::validate() const {
  if (blocks.empty()) throw std::invalid_argument("spec needs at least one block");
  for (const auto& b : blocks) {
    if (b.size < 1) throw std::invalid_argument("block sizes must be >= 1");
    if (!std::isfinite(b.re) || !std::isfinite(b.im)) {
      throw std::invalid_argument("eigenvalues must be finite");
    }
  }
  if (!(I > 0.0) || !std::isfinite(I)) {
    throw std::invalid_argument("sampling interval must be positive");
  }
  if (!(T >= 0.0) || !std::isfinite(T)) {
    throw std::invalid_argument("jitter window must be nonnegative");
  }
  const Eigen::Index m = state_dim();
  if (B_c.rows() != m || B_c.cols() < 1) {
    throw std::invalid_argument("B_c must have one row per state");
  }
  if (C_c.cols() != m || C_c.rows() < 1) {
    throw std::invalid_argument("C_c must have one column per state");
  }
  if (!B_c.allFinite() || !C_c.allFinite() || !D_c.allFinite()) {
    throw std::invalid_argument("matrices must be finite");
  }
  const Eigen::Index l = C_c.rows();
  if (D_c.rows() != l || D_c.cols() != l) {
    throw std::invalid_argument("D_c must be square with one row per output");
  }
  if (model::rank_with_tolerance(D_c, model::kDefaultRankTol) != l) {
    throw std::invalid_argument("D_c must be invertible");
  }
}

std::string to_string(JitterMode mode) {
  switch (mode) {
    case JitterMode::kNone:
      return "none";
    case JitterMode::kIidUniform:
      return "iid_uniform";
    case JitterMode::kGeneralDensity:
      return "general_density";
    case JitterMode::kWeylSqrt2:
      return "weyl_sqrt2";
    default:
      return "interval_variant";
  }
}

ComplexMatrix jordan_expm(const std::vector<ContinuousBlock>& blocks, double t) {
  if (!std::isfinite(t)) throw std::invalid_argument("time must be finite");
  Eigen::Index m = 0;
  for (const auto& b : blocks) m += b.size;
  ComplexMatrix E = ComplexMatrix::Zero(m, m);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    const Complex e = std::exp(block_lambda(b) * t);
    Complex coeff = e;  // t^d/d! * e^{lambda t}
    for (int d = 0; d < b.size; ++d) {
      if (d > 0) coeff *= t / static_cast<double>(d);
      for (int i = 0; i + d < b.size; ++i) E(at + i, at + i + d) = coeff;
    }
    at += b.size;
  }
  return E;
}

ComplexMatrix integrated_window(const ContinuousSpec& cspec, double w) {
  if (!(w >= 0.0) || !std::isfinite(w)) {
    throw std::invalid_argument("window length must be nonnegative");
  }
  return cspec.C_c * integral_expm(cspec.blocks, w);
}

ComplexMatrix integrated_C(const ContinuousSpec& cspec) {
  return integrated_window(cspec, cspec.I);
}

JitterSequence sample_jitter(JitterMode mode, int n, double T, std::uint64_t seed,
                             const DensityDescriptor& density) {
  if (n < 0) throw std::invalid_argument("count must be nonnegative");
  if (!(T >= 0.0) || !std::isfinite(T)) {
    throw std::invalid_argument("jitter window must be nonnegative");
  }
  JitterSequence out;
  out.mode = mode;
  out.values.resize(static_cast<std::size_t>(n), 0.0);
  switch (mode) {
    case JitterMode::kNone:
      break;
    case JitterMode::kWeylSqrt2: {
      const double r = std::sqrt(2.0);
      for (int k = 1; k <= n; ++k) {
        const double x = r * static_cast<double>(k);
        out.values[static_cast<std::size_t>(k - 1)] = T * (x - std::floor(x));
      }
      break;
    }
    case JitterMode::kIidUniform:
    case JitterMode::kIntervalVariant: {
      rng::SplitMix64 stream(seed);
      for (auto& v : out.values) v = T * stream.next_double();
      break;
    }
    case JitterMode::kGeneralDensity: {
      if (density.weights.empty() || !(density.support_hi > 0.0) ||
          !std::isfinite(density.support_hi)) {
        throw std::invalid_argument("density descriptor must have bounded support");
      }
      double total = 0.0;
      for (const double w : density.weights) {
        if (!std::isfinite(w) || w < 0.0) {
          throw std::invalid_argument("density descriptor must be bounded");
        }
        total += w;
      }
      if (!(total > 0.0)) throw std::invalid_argument("density must have positive mass");
      if (density.support_hi > T) {
        throw std::invalid_argument("density support must lie within [0, T]");
      }
      std::vector<double> cdf(density.weights.size());
      std::partial_sum(density.weights.begin(), density.weights.end(), cdf.begin());
      const double bin = density.support_hi / static_cast<double>(density.weights.size());
      rng::SplitMix64 stream(seed);
      for (auto& v : out.values) {
        const double u = stream.next_double() * total;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const auto idx = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(it - cdf.begin(),
                                     static_cast<std::ptrdiff_t>(cdf.size()) - 1));
        const double lo = idx == 0 ? 0.0 : cdf[idx - 1];
        const double within = density.weights[idx] > 0.0
                                  ? (u - lo) / density.weights[idx]
                                  : 0.0;
        v = bin * (static_cast<double>(idx) + std::clamp(within, 0.0, 1.0));
      }
      break;
    }
  }
  return out;
}

DiscretizationResult discretize_nonuniform(const ContinuousSpec& cspec,
                                           const JitterSequence& jitter, long horizon) {
  cspec.validate();
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (static_cast<long>(jitter.values.size()) < horizon) {
    throw std::invalid_argument("jitter sequence shorter than the horizon");
  }
  for (const double t : jitter.values) {
    if (!(t >= 0.0) || t > cspec.T) {
      throw std::invalid_argument("jitter values must lie in [0, T]");
    }
  }

  const ComplexMatrix BBt = cspec.B_c * cspec.B_c.adjoint();
  const ComplexMatrix DDt = cspec.D_c * cspec.D_c.adjoint();
  const double h0 = cspec.I / static_cast<double>(kQuadratureDivisions);

  // Trapezoid over [0, len] at step <= I/512, hitting the endpoint exactly.
  const auto quadrature = [&](double len, const auto& integrand) {
    const int steps = std::max(1, static_cast<int>(std::ceil(len / h0)));
    const double h = len / steps;
    ComplexMatrix sum = 0.5 * (integrand(0.0) + integrand(len));
    for (int i = 1; i < steps; ++i) sum += integrand(h * i);
    return ComplexMatrix(h * sum);
  };

  std::unordered_map<std::uint64_t, ComplexMatrix> q_cache;
  const auto process_noise = [&](double delta) -> const ComplexMatrix& {
    auto [it, inserted] = q_cache.try_emplace(double_key(delta));
    if (inserted) {
      it->second = quadrature(delta, [&](double u) -> ComplexMatrix {
        const ComplexMatrix E = jordan_expm(cspec.blocks, u);
        return E * BBt * E.adjoint();
      });
    }
    return it->second;
  };

  std::unordered_map<std::uint64_t, ComplexMatrix> r_cache;
  const auto observation_noise = [&](double window) -> const ComplexMatrix& {
    auto [it, inserted] = r_cache.try_emplace(double_key(window));
    if (inserted) {
      ComplexMatrix R = quadrature(window, [&](double w) -> ComplexMatrix {
        const ComplexMatrix G = integrated_window(cspec, w);
        return G * BBt * G.adjoint();
      });
      R += window * DDt;
      it->second = 0.5 * (R + R.adjoint());
    }
    return it->second;
  };

  DiscretizationResult out;
  out.cross_correlation_zeroed = true;
  auto& tv = out.model;
  tv.A.reserve(static_cast<std::size_t>(horizon));
  tv.C.reserve(static_cast<std::size_t>(horizon));
  tv.Q_full.reserve(static_cast<std::size_t>(horizon));
  tv.R.reserve(static_cast<std::size_t>(horizon));

  if (jitter.mode == JitterMode::kIntervalVariant) {
    // Samples at the uniform instants nI over windows [(n-1)I - t_n, nI].
    const ComplexMatrix A = jordan_expm(cspec.blocks, cspec.I);
    const ComplexMatrix& Q = process_noise(cspec.I);
    for (long n = 1; n <= horizon; ++n) {
      const double t = jitter.values[static_cast<std::size_t>(n - 1)];
      tv.A.push_back(A);
      tv.C.push_back(integrated_window(cspec, cspec.I + t));
      tv.Q_full.push_back(Q);
      tv.R.push_back(observation_noise(cspec.I + t));
    }
    return out;
  }

  // Start-jitter modes: sample instants nI - t_n; the observation window has
  // length I for every n, so the observation matrix and noise are constant.
  const ComplexMatrix C = integrated_C(cspec);
  const ComplexMatrix& R = observation_noise(cspec.I);
  double prev = 0.0;
  for (long n = 1; n <= horizon; ++n) {
    const double instant =
        static_cast<double>(n) * cspec.I - jitter.values[static_cast<std::size_t>(n - 1)];
    const double delta = instant - prev;
    if (!(delta > 0.0)) {
      std::ostringstream msg;
      msg << "sample instants must advance: sample " << n << " elapsed " << delta;
      throw std::invalid_argument(msg.str());
    }
    prev = instant;
    tv.A.push_back(jordan_expm(cspec.blocks, delta));
    tv.C.push_back(C);
    tv.Q_full.push_back(process_noise(delta));
    tv.R.push_back(R);
  }
  return out;
}

ContinuousCritical continuous_critical(const ContinuousSpec& cspec) {
  cspec.validate();
  const ComplexMatrix Cd = integrated_C(cspec);
  // Rank decisions are scaled by the full observation matrix, not the group
  // columns alone: a mode whose integrated observation cancels to rounding
  // noise (e.g. im = 2*pi/I under zero jitter) must count as unobservable.
  // The pre-integration scale |C_c| * I anchors the comparison even when
  // every integrated column cancels.
  const double global_scale =
      std::max(Eigen::JacobiSVD<ComplexMatrix>(Cd).singularValues()(0),
               Eigen::JacobiSVD<ComplexMatrix>(cspec.C_c).singularValues()(0) *
                   cspec.I);

  std::vector<Eigen::Index> first;
  Eigen::Index at = 0;
  for (const auto& b : cspec.blocks) {
    first.push_back(at);
    at += b.size;
  }

  // Unobservable eigenvalue of (A_c, Cd): the Cd columns at the first
  // positions of its Jordan blocks are rank deficient.
  std::vector<bool> seen(cspec.blocks.size(), false);
  double max_re = cspec.blocks.front().re;
  for (std::size_t i = 0; i < cspec.blocks.size(); ++i) {
    max_re = std::max(max_re, cspec.blocks[i].re);
    if (seen[i]) continue;
    std::vector<std::size_t> group;
    for (std::size_t j = i; j < cspec.blocks.size(); ++j) {
      if (cspec.blocks[j].re == cspec.blocks[i].re &&
          cspec.blocks[j].im == cspec.blocks[i].im) {
        group.push_back(j);
        seen[j] = true;
      }
    }
    ComplexMatrix cols(Cd.rows(), static_cast<Eigen::Index>(group.size()));
    for (std::size_t k = 0; k < group.size(); ++k) {
      cols.col(static_cast<Eigen::Index>(k)) = Cd.col(first[group[k]]);
    }
    Eigen::JacobiSVD<ComplexMatrix> svd(cols);
    const double threshold = model::kDefaultRankTol *
                             static_cast<double>(std::max(cols.rows(), cols.cols())) *
                             global_scale;
    int rank = 0;
    for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k) {
      if (svd.singularValues()(k) > threshold) ++rank;
    }
    if (rank < static_cast<int>(group.size()) && cspec.blocks[i].re >= 0.0) {
      return ContinuousCritical{0.0, true};
    }
  }
  return ContinuousCritical{std::min(1.0, std::exp(-2.0 * max_re * cspec.I)), false};
}

std::vector<ComplexVector> apply_time_varying_filter(
    const std::vector<ComplexVector>& y, const std::vector<double>& alpha,
    const std::vector<double>& alpha_prime) {
  if (alpha.size() != y.size() || alpha_prime.size() != y.size()) {
    throw std::invalid_argument("filter coefficient sequences must match y in length");
  }
  std::vector<ComplexVector> out;
  out.reserve(y.size());
  for (std::size_t n = 0; n < y.size(); ++n) {
    if (y[n].size() != y.front().size()) {
      throw std::invalid_argument("observation vectors must share one dimension");
    }
    ComplexVector v = alpha[n] * y[n];
    if (n > 0) v += alpha_prime[n] * y[n - 1];
    out.push_back(std::move(v));
  }
  return out;
}

model::SystemSpec sampled_spec(const ContinuousSpec& cspec, std::int64_t max_den,
                               double tol) {
  cspec.validate();
  const Eigen::Index m = cspec.state_dim();
  ComplexMatrix basis = ComplexMatrix::Zero(m, m);

  model::SystemSpec spec;
  Eigen::Index at = 0;
  for (const auto& b : cspec.blocks) {
    const double mag = std::exp(b.re * cspec.I);
    double theta = std::fmod(b.im * cspec.I, kTwoPi);
    if (theta < 0.0) theta += kTwoPi;
    spec.blocks.push_back(model::JordanBlock{
        model::Eigenvalue{mag, model::approximate_rational_phase(theta, max_den, tol)},
        b.size});

    // e^{J_k(lambda) I} is similar to J_k(e^{lambda I}); the similarity is the
    // Krylov chain of its nilpotent part applied to the last basis vector.
    const Eigen::Index k = b.size;
    if (k == 1) {
      basis(at, at) = 1.0;
    } else {
      const ComplexMatrix EJ = jordan_expm({b}, cspec.I);
      const Complex mu = std::exp(block_lambda(b) * cspec.I);
      const ComplexMatrix N = EJ - mu * ComplexMatrix::Identity(k, k);
      ComplexVector v = ComplexVector::Zero(k);
      v(k - 1) = 1.0;
      for (Eigen::Index j = k; j-- > 0;) {
        basis.block(at, at + j, k, 1) = v;
        v = N * v;
      }
    }
    at += b.size;
  }

  spec.C = integrated_C(cspec) * basis;
  // Snap cancellation residue to exact zero so the discrete cycle analysis
  // sees a mode whose window integral vanishes as truly unobservable. The
  // pre-integration scale |C_c| * I anchors the floor even when every
  // integrated column cancels.
  const double floor =
      1e-12 * std::max(spec.C.cwiseAbs().maxCoeff(),
                       cspec.C_c.cwiseAbs().maxCoeff() * cspec.I *
                           basis.cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < spec.C.cols(); ++j) {
    for (Eigen::Index i = 0; i < spec.C.rows(); ++i) {
      if (std::abs(spec.C(i, j)) <= floor) spec.C(i, j) = 0.0;
    }
  }
  spec.B = ComplexMatrix::Identity(m, m);
  spec.sigma = 1.0;
  spec.sigma_prime = 1.0;
  return spec;
}

ComparisonRecord uniform_vs_nonuniform_report(const ContinuousSpec& cspec,
                                              const std::vector<double>& p_e_grid,
                                              int trials, long horizon, JitterMode mode,
                                              std::uint64_t seed, int workers) {
  cspec.validate();
  ComparisonRecord out;

  out.analytic_uniform = spectral::critical_erasure(sampled_spec(cspec)).critical;
  const ContinuousCritical cc = continuous_critical(cspec);
  out.analytic_nonuniform = cc.critical;
  out.unobservable_unstable = cc.unobservable_unstable;

  const JitterSequence none = sample_jitter(JitterMode::kNone, static_cast<int>(horizon),
                                            cspec.T, seed);
  const JitterSequence jit =
      sample_jitter(mode, static_cast<int>(horizon), cspec.T, seed);

  const DiscretizationResult uniform = discretize_nonuniform(cspec, none, horizon);
  const DiscretizationResult jittered = discretize_nonuniform(cspec, jit, horizon);
  out.cross_correlation_zeroed =
      uniform.cross_correlation_zeroed || jittered.cross_correlation_zeroed;

  out.uniform_sweep =
      sim::sweep_threshold(uniform.model, p_e_grid, trials, horizon, seed, workers);
  out.nonuniform_sweep =
      sim::sweep_threshold(jittered.model, p_e_grid, trials, horizon, seed, workers);
  return out;
}

}  // namespace ikf::sampling
