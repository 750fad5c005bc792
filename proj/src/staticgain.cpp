#include "ikf/staticgain.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "ikf/rng.hpp"

namespace ikf::staticgain {

namespace {

ComplexMatrix kron(const ComplexMatrix& X, const ComplexMatrix& Y) {
  ComplexMatrix Z(X.rows() * Y.rows(), X.cols() * Y.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      Z.block(i * Y.rows(), j * Y.cols(), Y.rows(), Y.cols()) = X(i, j) * Y;
  return Z;
}

double spectral_radius(const ComplexMatrix& M) {
  Eigen::ComplexEigenSolver<ComplexMatrix> es(M, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Erasure-free stationary one-step-prediction covariance (Q = R = I), used
// only to seed the gain search.
ComplexMatrix stationary_prediction_covariance(const ComplexMatrix& A,
                                               const ComplexMatrix& C) {
  const Eigen::Index m = A.rows();
  const Eigen::Index l = C.rows();
  ComplexMatrix S = ComplexMatrix::Identity(m, m);
  const ComplexMatrix I_m = ComplexMatrix::Identity(m, m);
  const ComplexMatrix I_l = ComplexMatrix::Identity(l, l);
  for (int it = 0; it < 10000; ++it) {
    const ComplexMatrix G = (C * S * C.adjoint() + I_l).ldlt().solve(C * S * A.adjoint());
    const ComplexMatrix next = A * S * A.adjoint() - A * S * C.adjoint() * G + I_m;
    const double delta = (next - S).cwiseAbs().maxCoeff();
    S = 0.5 * (next + next.adjoint());
    if (delta < 1e-10) break;
    if (!S.allFinite() || S.cwiseAbs().maxCoeff() > 1e12) break;  // undetectable pair
  }
  return S;
}

// Nelder-Mead over the 2*m*l real parameters of K, minimizing the lifted
// radius. Stops early once a candidate clears the feasibility margin.
struct SimplexSearch {
  std::function<double(const Eigen::VectorXd&)> f;
  int max_evals;
  int evals = 0;

  struct Best {
    Eigen::VectorXd x;
    double value;
  };

  Best run(const Eigen::VectorXd& x0, double step) {
    const Eigen::Index n = x0.size();
    std::vector<Eigen::VectorXd> xs;
    std::vector<double> fs;
    xs.reserve(static_cast<std::size_t>(n) + 1);
    xs.push_back(x0);
    fs.push_back(eval(x0));
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd xi = x0;
      xi(i) += step;
      xs.push_back(xi);
      fs.push_back(eval(xi));
    }
    auto order = [&] {
      std::vector<std::size_t> idx(xs.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return fs[a] < fs[b];
      });
      std::vector<Eigen::VectorXd> xs2;
      std::vector<double> fs2;
      for (std::size_t i : idx) {
        xs2.push_back(xs[i]);
        fs2.push_back(fs[i]);
      }
      xs.swap(xs2);
      fs.swap(fs2);
    };
    order();
    while (evals < max_evals && !feasible(fs.front())) {
      const std::size_t worst = xs.size() - 1;
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (std::size_t i = 0; i < worst; ++i) centroid += xs[i];
      centroid /= static_cast<double>(worst);

      const Eigen::VectorXd xr = centroid + (centroid - xs[worst]);
      const double fr = eval(xr);
      if (fr < fs.front()) {
        const Eigen::VectorXd xe = centroid + 2.0 * (centroid - xs[worst]);
        const double fe = eval(xe);
        if (fe < fr) {
          xs[worst] = xe;
          fs[worst] = fe;
        } else {
          xs[worst] = xr;
          fs[worst] = fr;
        }
      } else if (fr < fs[worst - 1]) {
        xs[worst] = xr;
        fs[worst] = fr;
      } else {
        const Eigen::VectorXd xc = centroid + 0.5 * (xs[worst] - centroid);
        const double fc = eval(xc);
        if (fc < fs[worst]) {
          xs[worst] = xc;
          fs[worst] = fc;
        } else {
          for (std::size_t i = 1; i < xs.size(); ++i) {
            xs[i] = xs.front() + 0.5 * (xs[i] - xs.front());
            fs[i] = eval(xs[i]);
          }
        }
      }
      order();
    }
    return {xs.front(), fs.front()};
  }

  static bool feasible(double v) { return v < 1.0 - kEpsMargin; }

 private:
  double eval(const Eigen::VectorXd& x) {
    ++evals;
    return f(x);
  }
};

Eigen::VectorXd pack(const ComplexMatrix& K) {
  Eigen::VectorXd x(2 * K.size());
  Eigen::Index at = 0;
  for (Eigen::Index j = 0; j < K.cols(); ++j)
    for (Eigen::Index i = 0; i < K.rows(); ++i) {
      x(at++) = K(i, j).real();
      x(at++) = K(i, j).imag();
    }
  return x;
}

ComplexMatrix unpack(const Eigen::VectorXd& x, Eigen::Index rows, Eigen::Index cols) {
  ComplexMatrix K(rows, cols);
  Eigen::Index at = 0;
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) {
      K(i, j) = Complex(x(at), x(at + 1));
      at += 2;
    }
  return K;
}

}  // namespace

FeasibilityResult erasure_lyapunov_radius(const ComplexMatrix& A,
                                          const ComplexMatrix& C,
                                          const ComplexMatrix& K, double p_e) {
  if (A.rows() != A.cols()) throw std::invalid_argument("A must be square");
  if (C.cols() != A.rows()) throw std::invalid_argument("C column count must match A");
  if (K.rows() != A.rows() || K.cols() != C.rows())
    throw std::invalid_argument("K must be m x l");
  if (!(p_e >= 0.0 && p_e <= 1.0)) throw std::invalid_argument("p_e must lie in [0, 1]");
  const ComplexMatrix Acl = A + K * C;
  const ComplexMatrix lift =
      p_e * kron(A.conjugate(), A) + (1.0 - p_e) * kron(Acl.conjugate(), Acl);
  FeasibilityResult r;
  r.spectral_radius = spectral_radius(lift);
  r.feasible = r.spectral_radius < 1.0 - kEpsMargin;
  return r;
}

bool lyapunov_stable(const ComplexMatrix& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("A must be square");
  return spectral_radius(A) < 1.0;
}

StaticGainResult max_static_gain_erasure(const ComplexMatrix& A,
                                         const ComplexMatrix& C,
                                         const SearchConfig& cfg) {
  const Eigen::Index m = A.rows();
  const Eigen::Index l = C.rows();
  StaticGainResult result;

  const double rho_A = spectral_radius(A);
  if (rho_A < 1.0) {
    // Stable plant: no observations needed, K = 0 certifies every p_e.
    result.p_lower_bound = 1.0;
    result.best_K.K = ComplexMatrix::Zero(m, l);
    return result;
  }

  // Seed gain: erasure-free stationary predictor gain, so A + K0 C is stable.
  const ComplexMatrix S = stationary_prediction_covariance(A, C);
  const ComplexMatrix I_l = ComplexMatrix::Identity(l, l);
  const ComplexMatrix K0 =
      -(A * S * C.adjoint() *
        (C * S * C.adjoint() + I_l).ldlt().solve(ComplexMatrix::Identity(l, l)));

  rng::SplitMix64 gen(cfg.seed);
  const double seed_scale = 0.5 * (1.0 + K0.cwiseAbs().maxCoeff());

  ComplexMatrix best_K = K0;
  // Inner search: feasible iff some restart's Nelder-Mead clears the margin.
  auto search_feasible = [&](double pe, ComplexMatrix& K_out) {
    const int per_restart = std::max(1, cfg.evals_per_pe / std::max(1, cfg.restarts));
    for (int r = 0; r < cfg.restarts; ++r) {
      ComplexMatrix Kstart = K0;
      if (r > 0) {
        for (Eigen::Index j = 0; j < Kstart.cols(); ++j)
          for (Eigen::Index i = 0; i < Kstart.rows(); ++i)
            Kstart(i, j) += seed_scale * Complex(gen.next_gaussian(), gen.next_gaussian());
      }
      SimplexSearch nm;
      nm.max_evals = per_restart;
      nm.f = [&](const Eigen::VectorXd& x) {
        return erasure_lyapunov_radius(A, C, unpack(x, m, l), pe).spectral_radius;
      };
      const auto best = nm.run(pack(Kstart), 0.25 * seed_scale);
      if (SimplexSearch::feasible(best.value)) {
        K_out = unpack(best.x, m, l);
        return true;
      }
    }
    return false;
  };

  // p_e = 0 is feasible with K0 by stationary-filter stability; the upper
  // endpoint 1/rho(A)^2 is infeasible because the lift dominates the positive
  // map p_e * conj(A) (x) A, whose radius there is already 1.
  double lo = 0.0;
  double hi = std::min(1.0, 1.0 / (rho_A * rho_A));
  while (hi - lo > cfg.bisect_tol) {
    const double mid = 0.5 * (lo + hi);
    ComplexMatrix K_mid;
    if (search_feasible(mid, K_mid)) {
      lo = mid;
      best_K = K_mid;
    } else {
      hi = mid;
    }
  }

  result.p_lower_bound = lo;
  result.best_K.K = best_K;
  // If even the seed certificate failed at p_e = 0 the budget was too small
  // to certify anything; report that instead of pretending zero is tight.
  if (lo == 0.0) {
    ComplexMatrix K_zero;
    result.budget_exhausted = !search_feasible(0.0, K_zero);
    if (!result.budget_exhausted) result.best_K.K = K_zero;
  }
  return result;
}

StaticGainResult max_static_gain_erasure(const model::SystemSpec& spec,
                                         const SearchConfig& cfg) {
  spec.validate();
  return max_static_gain_erasure(spec.A(), spec.C, cfg);
}

}  // namespace ikf::staticgain
