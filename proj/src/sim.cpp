#include "ikf/sim.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "ikf/rng.hpp"

namespace ikf::sim {
namespace {

ComplexMatrix hermitize(const ComplexMatrix& M) { return 0.5 * (M + M.adjoint()); }

// Relative eigenvalue floor: -1e-10 scaled by max(1, largest eigenvalue).
void require_psd(const ComplexMatrix& sigma) {
  if (sigma.rows() != sigma.cols()) {
    throw std::invalid_argument("covariance must be square");
  }
  if (!sigma.allFinite()) {
    throw std::invalid_argument("covariance has non-finite entries");
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(hermitize(sigma),
                                                  Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().maxCoeff();
  const double lo = es.eigenvalues().minCoeff();
  if (lo < -1e-10 * std::max(1.0, std::abs(hi))) {
    throw std::invalid_argument("covariance is not positive semidefinite");
  }
}

ComplexMatrix step_impl(const ComplexMatrix& S, bool beta, const DiscreteModel& m) {
  if (!beta) {
    return hermitize(m.A * S * m.A.adjoint() + m.Q_full);
  }
  const ComplexMatrix CS = m.C * S;
  const ComplexMatrix G = hermitize(CS * m.C.adjoint() + m.R);
  // L = S C' G^-1; G is Hermitian positive definite since R >= sigma'^2 I.
  const ComplexMatrix L = G.ldlt().solve(CS).adjoint();
  const ComplexMatrix An = m.A - m.A * L * m.C;
  const ComplexMatrix AL = m.A * L;
  return hermitize(An * S * An.adjoint() + AL * m.R * AL.adjoint() + m.Q_full);
}

// Least-squares slope of y over [first, y.size()).
double ls_slope(const std::vector<double>& y, std::size_t first) {
  const std::size_t n = y.size() - first;
  const double xm = 0.5 * static_cast<double>(n - 1);
  double ym = 0.0;
  for (std::size_t i = first; i < y.size(); ++i) ym += y[i];
  ym /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = first; i < y.size(); ++i) {
    const double dx = static_cast<double>(i - first) - xm;
    sxx += dx * dx;
    sxy += dx * (y[i] - ym);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

double safe_log(double v) { return std::log(std::max(v, 1e-300)); }

// Tail index of the pooled distribution from order statistics: regress
// log(r-th largest) on log r over log-spaced ranks between 10 and 2% of the
// pool; the tail index is -1/slope. Rank-space regression weights repeated
// values by their probability mass, so lattice-valued traces do not bias the
// fit. Returns nothing when the pool is too small, the spanned range is
// under 0.7 nats, or the fit is non-decreasing (no resolvable power tail).
std::optional<double> tail_index(std::vector<double> pool) {
  const auto n = static_cast<std::int64_t>(pool.size());
  const std::int64_t r_lo = 10;
  const auto r_hi = static_cast<std::int64_t>(0.02 * static_cast<double>(n));
  if (r_hi <= 3 * r_lo) return std::nullopt;
  std::sort(pool.begin(), pool.end(), std::greater<>());
  constexpr int kPoints = 25;
  std::vector<std::int64_t> ranks;
  for (int i = 0; i < kPoints; ++i) {
    const double t = static_cast<double>(i) / (kPoints - 1);
    const double lr = std::log(static_cast<double>(r_lo)) +
                      t * (std::log(static_cast<double>(r_hi)) -
                           std::log(static_cast<double>(r_lo)));
    ranks.push_back(std::llround(std::exp(lr)));
  }
  std::sort(ranks.begin(), ranks.end());
  ranks.erase(std::unique(ranks.begin(), ranks.end()), ranks.end());

  std::vector<double> X, Y;
  for (const std::int64_t r : ranks) {
    X.push_back(std::log(static_cast<double>(r)));
    Y.push_back(safe_log(pool[static_cast<std::size_t>(r - 1)]));
  }
  if (Y.front() - Y.back() < 0.7) return std::nullopt;
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    xm += X[i];
    ym += Y[i];
  }
  xm /= static_cast<double>(X.size());
  ym /= static_cast<double>(Y.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    sxx += (X[i] - xm) * (X[i] - xm);
    sxy += (X[i] - xm) * (Y[i] - ym);
  }
  if (sxx <= 0.0) return std::nullopt;
  const double slope = sxy / sxx;
  if (slope >= 0.0) return std::nullopt;
  return -1.0 / slope;
}

template <typename Model>
TraceSequence trial_impl(const Model& m, const ErasureModel& em, long horizon) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(em.p_e >= 0.0 && em.p_e <= 1.0)) {
    throw std::invalid_argument("p_e must lie in [0,1]");
  }
  TraceSequence out;
  out.values.resize(static_cast<std::size_t>(horizon));

  ComplexMatrix S;
  if constexpr (std::is_same_v<Model, DiscreteModel>) {
    S = ComplexMatrix::Identity(m.A.rows(), m.A.cols());
  } else {
    S = ComplexMatrix::Identity(m.A.front().rows(), m.A.front().cols());
  }

  rng::SplitMix64 stream(em.seed);
  for (long n = 0; n < horizon; ++n) {
    const bool erased = stream.next_double() < em.p_e;
    if constexpr (std::is_same_v<Model, DiscreteModel>) {
      S = step_impl(S, !erased, m);
    } else {
      S = step_impl(S, !erased, m.at(n));
    }
    double tr = S.trace().real();
    if (!std::isfinite(tr) || tr > kOverflowGuard) {
      // Truncate: repeat the clamped value so every sequence keeps length
      // `horizon` and stays finite.
      tr = kOverflowGuard;
      out.overflow = true;
      for (long k = n; k < horizon; ++k) {
        out.values[static_cast<std::size_t>(k)] = tr;
      }
      break;
    }
    out.values[static_cast<std::size_t>(n)] = tr;
  }
  return out;
}

template <typename Model>
TraceEnsemble ensemble_impl(const Model& m, double p_e, std::uint64_t seed, int trials,
                            long horizon, int workers) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  TraceEnsemble out;
  out.trials.resize(static_cast<std::size_t>(trials));
  out.horizon = horizon;
  out.p_e = p_e;

  const int w = std::min(resolve_workers(workers), trials);
  // Trial t always uses stream_seed(seed, t): the partition into workers
  // never changes any trial's stream, so results are worker-count invariant.
  auto run_range = [&](int lo, int hi, std::exception_ptr& err) {
    try {
      for (int t = lo; t < hi; ++t) {
        out.trials[static_cast<std::size_t>(t)] =
            trial_impl(m, ErasureModel{p_e, rng::stream_seed(seed, t)}, horizon);
      }
    } catch (...) {
      err = std::current_exception();
    }
  };

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
  if (w == 1) {
    run_range(0, trials, errors[0]);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(w));
    for (int i = 0; i < w; ++i) {
      const int lo = static_cast<int>(static_cast<long>(trials) * i / w);
      const int hi = static_cast<int>(static_cast<long>(trials) * (i + 1) / w);
      pool.emplace_back(run_range, lo, hi, std::ref(errors[static_cast<std::size_t>(i)]));
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
  return out;
}

template <typename Model>
SweepResult sweep_impl(const Model& m, const std::vector<double>& grid, int trials,
                       long horizon, std::uint64_t seed, int workers) {
  if (grid.empty()) throw std::invalid_argument("grid must be nonempty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) {
      throw std::invalid_argument("grid values must lie in [0,1]");
    }
    if (i > 0 && grid[i] <= grid[i - 1]) {
      throw std::invalid_argument("grid must be sorted strictly ascending");
    }
  }

  SweepResult out;
  out.grid = grid;
  for (const double p_e : grid) {
    out.classifications.push_back(
        classify_boundedness(ensemble_impl(m, p_e, seed, trials, horizon, workers)));
  }

  // Valid pattern: a bounded prefix, at most one inconclusive run, then a
  // divergent suffix; any of the three may be empty.
  int phase = 0;
  bool ok = true;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Verdict v = out.classifications[i].verdict;
    const int want = v == Verdict::kBounded ? 0 : (v == Verdict::kInconclusive ? 1 : 2);
    if (want < phase) {
      ok = false;
      bad = i;
      break;
    }
    phase = want;
  }

  if (!ok) {
    out.monotone = false;
    out.interval_lo = 0.0;
    out.interval_hi = 1.0;
    std::ostringstream msg;
    msg << "non-monotone verdicts: " << to_string(out.classifications[bad].verdict)
        << " at p_e=" << grid[bad] << " after a later phase";
    out.diagnostic = msg.str();
    return out;
  }

  out.monotone = true;
  out.interval_lo = 0.0;
  out.interval_hi = 1.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (out.classifications[i].verdict == Verdict::kBounded) out.interval_lo = grid[i];
  }
  for (std::size_t i = grid.size(); i-- > 0;) {
    if (out.classifications[i].verdict == Verdict::kDivergent) out.interval_hi = grid[i];
  }
  return out;
}

}  // namespace

DiscreteModel TimeVaryingModel::at(long n) const {
  if (n < 0 || n >= horizon()) throw std::invalid_argument("time index out of range");
  const auto i = static_cast<std::size_t>(n);
  return DiscreteModel{A[i], C[i], Q_full[i], R[i]};
}

DiscreteModel make_model(const model::SystemSpec& spec) {
  spec.validate();
  DiscreteModel m;
  m.A = spec.A();
  m.C = spec.C;
  m.Q_full = spec.B * spec.B.adjoint();
  m.R = ComplexMatrix::Identity(spec.output_dim(), spec.output_dim());
  return m;
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kBounded:
      return "bounded";
    case Verdict::kDivergent:
      return "divergent";
    default:
      return "inconclusive";
  }
}

CovarianceState kalman_covariance_step(const CovarianceState& state, bool beta,
                                       const DiscreteModel& m) {
  if (state.sigma.rows() != m.A.rows()) {
    throw std::invalid_argument("covariance dimension does not match the model");
  }
  require_psd(state.sigma);
  return CovarianceState{step_impl(state.sigma, beta, m), state.step + 1};
}

CovarianceState kalman_covariance_step(const CovarianceState& state, bool beta,
                                       const model::SystemSpec& spec,
                                       const ComplexMatrix& Q, const ComplexMatrix& R) {
  spec.validate();
  const auto g = spec.B.cols();
  const auto l = spec.output_dim();
  if (Q.rows() != g || Q.cols() != g) throw std::invalid_argument("Q must be g x g");
  if (R.rows() != l || R.cols() != l) throw std::invalid_argument("R must be l x l");
  DiscreteModel m{spec.A(), spec.C, spec.B * Q * spec.B.adjoint(), R};
  return kalman_covariance_step(state, beta, m);
}

TraceSequence run_trial(const DiscreteModel& m, const ErasureModel& em, long horizon) {
  return trial_impl(m, em, horizon);
}

TraceSequence run_trial(const model::SystemSpec& spec, const ErasureModel& em,
                        long horizon) {
  return trial_impl(make_model(spec), em, horizon);
}

TraceSequence run_trial(const TimeVaryingModel& m, const ErasureModel& em,
                        long horizon) {
  if (m.A.empty() || m.C.size() != m.A.size() || m.Q_full.size() != m.A.size() ||
      m.R.size() != m.A.size()) {
    throw std::invalid_argument("time-varying matrix sequences must share one length");
  }
  if (horizon > m.horizon()) {
    throw std::invalid_argument("horizon exceeds the time-varying model length");
  }
  return trial_impl(m, em, horizon);
}

TraceEnsemble run_ensemble(const DiscreteModel& m, double p_e, std::uint64_t seed,
                           int trials, long horizon, int workers) {
  return ensemble_impl(m, p_e, seed, trials, horizon, workers);
}

TraceEnsemble run_ensemble(const TimeVaryingModel& m, double p_e, std::uint64_t seed,
                           int trials, long horizon, int workers) {
  if (m.A.empty() || m.C.size() != m.A.size() || m.Q_full.size() != m.A.size() ||
      m.R.size() != m.A.size()) {
    throw std::invalid_argument("time-varying matrix sequences must share one length");
  }
  if (horizon > m.horizon()) {
    throw std::invalid_argument("horizon exceeds the time-varying model length");
  }
  return ensemble_impl(m, p_e, seed, trials, horizon, workers);
}

Classification classify_boundedness(const TraceEnsemble& ensemble) {
  if (ensemble.horizon < 500) throw std::invalid_argument("horizon must be >= 500");
  if (ensemble.trials.empty()) throw std::invalid_argument("ensemble has no trials");
  const auto h = static_cast<std::size_t>(ensemble.horizon);
  for (const auto& t : ensemble.trials) {
    if (t.values.size() != h) {
      throw std::invalid_argument("trial length does not match the horizon");
    }
  }

  bool overflow = false;
  std::vector<double> mean_log(h, 0.0);
  for (const auto& t : ensemble.trials) {
    overflow = overflow || t.overflow;
    for (std::size_t n = 0; n < h; ++n) mean_log[n] += safe_log(t.values[n]);
  }
  for (auto& v : mean_log) v /= static_cast<double>(ensemble.trials.size());

  const std::size_t first = h / 2;
  Classification out;
  out.mean_log_slope = ls_slope(mean_log, first);

  std::vector<double> pool;
  pool.reserve(ensemble.trials.size() * (h - first));
  for (const auto& t : ensemble.trials) {
    pool.insert(pool.end(), t.values.begin() + static_cast<std::ptrdiff_t>(first),
                t.values.end());
  }
  out.tail_alpha = tail_index(std::move(pool));

  // Slope catches per-trajectory divergence; the tail index catches a
  // divergent ensemble mean over recurrent trajectories (mean finite iff
  // tail index > 1). Indecisive combinations stay inconclusive.
  if (overflow || out.mean_log_slope > kSlopeHi) {
    out.verdict = Verdict::kDivergent;
  } else if (out.tail_alpha && *out.tail_alpha < kAlphaDivergent) {
    out.verdict = Verdict::kDivergent;
  } else if (out.mean_log_slope < kSlopeLo &&
             (!out.tail_alpha || *out.tail_alpha > kAlphaBounded)) {
    out.verdict = Verdict::kBounded;
  } else {
    out.verdict = Verdict::kInconclusive;
  }
  return out;
}

SweepResult sweep_threshold(const model::SystemSpec& spec, const std::vector<double>& grid,
                            int trials, long horizon, std::uint64_t seed, int workers) {
  return sweep_impl(make_model(spec), grid, trials, horizon, seed, workers);
}

SweepResult sweep_threshold(const TimeVaryingModel& m, const std::vector<double>& grid,
                            int trials, long horizon, std::uint64_t seed, int workers) {
  if (horizon > m.horizon()) {
    throw std::invalid_argument("horizon exceeds the time-varying model length");
  }
  return sweep_impl(m, grid, trials, horizon, seed, workers);
}

int resolve_workers(int requested) {
  int w = requested;
  if (w < 1) {
    if (const char* env = std::getenv("IKF_WORKERS")) {
      char* end = nullptr;
      const long parsed = std::strtol(env, &end, 10);
      if (end != env && *end == '\0' && parsed >= 1) w = static_cast<int>(parsed);
    }
  }
  if (w < 1) {
    const unsigned hc = std::thread::hardware_concurrency();
    w = hc > 0 ? static_cast<int>(hc) : 1;
  }
  return std::clamp(w, 1, 64);
}

}  // namespace ikf::sim
