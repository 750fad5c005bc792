#include "ikf/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ikf::spectral {

namespace {

std::int64_t saturating_lcm(std::int64_t a, std::int64_t b) {
  const std::int64_t g = std::gcd(a, b);
  const __int128 v = static_cast<__int128>(a / g) * b;
  constexpr std::int64_t kCap = std::int64_t{1} << 40;
  return v > kCap ? kCap : static_cast<std::int64_t>(v);
}

// Unit-modulus factors of the cycle's expanded block list, one per column.
std::vector<Complex> column_units(const EigenvalueCycle& cycle) {
  std::vector<Complex> units;
  for (const auto& mem : cycle.members) {
    const Complex u = std::polar(1.0, mem.eig.phase.radians());
    for (std::size_t k = 0; k < mem.block_indices.size(); ++k) units.push_back(u);
  }
  return units;
}

// Stacked Gramian over surviving slots; erased[s] marks removed rows.
ComplexMatrix stack_survivors(const ComplexMatrix& Ci,
                              const std::vector<Complex>& units, double magnitude,
                              const std::vector<char>& erased, bool normalize_rows) {
  const Eigen::Index l = Ci.rows();
  const Eigen::Index nu = Ci.cols();
  const auto p = static_cast<std::int64_t>(erased.size());
  Eigen::Index surviving = 0;
  for (char e : erased)
    if (!e) ++surviving;
  ComplexMatrix G(surviving * l, nu);
  Eigen::Index at = 0;
  std::vector<Complex> pow(units.size(), Complex{1.0, 0.0});
  double mag_pow = 1.0;
  for (std::int64_t s = 0; s < p; ++s) {
    if (!erased[static_cast<std::size_t>(s)]) {
      for (Eigen::Index c = 0; c < nu; ++c) {
        const Complex scale =
            normalize_rows ? pow[static_cast<std::size_t>(c)]
                           : pow[static_cast<std::size_t>(c)] * mag_pow;
        G.block(at, c, l, 1) = Ci.col(c) * scale;
      }
      at += l;
    }
    for (std::size_t c = 0; c < pow.size(); ++c) pow[c] *= units[c];
    mag_pow *= magnitude;
  }
  return G;
}

bool rank_deficient(const ComplexMatrix& G, int nu, double rel_tol) {
  if (G.rows() == 0) return nu > 0;
  return model::rank_with_tolerance(G, rel_tol) < nu;
}

// Lexicographic k-subsets of {0..p-1}; returns false when exhausted.
bool next_combination(std::vector<int>& idx, int p) {
  const int k = static_cast<int>(idx.size());
  for (int i = k - 1; i >= 0; --i) {
    if (idx[static_cast<std::size_t>(i)] < p - k + i) {
      ++idx[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k; ++j)
        idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
      return true;
    }
  }
  return false;
}

double cycle_threshold(double magnitude, std::int64_t p, int l) {
  if (l == 0) return magnitude >= 1.0 ? 0.0 : 1.0;
  // Log-space keeps |lambda|^(2p/l) finite for large exponents.
  const double log_thr = -2.0 * (static_cast<double>(p) / l) * std::log(magnitude);
  return std::clamp(std::exp(log_thr), 0.0, 1.0);
}

}  // namespace

std::vector<int> EigenvalueCycle::all_block_indices() const {
  std::vector<int> idx;
  for (const auto& mem : members)
    idx.insert(idx.end(), mem.block_indices.begin(), mem.block_indices.end());
  return idx;
}

std::vector<EigenvalueCycle> partition_cycles(const model::SystemSpec& spec) {
  spec.validate();
  // Distinct eigenvalues in input order, each with its block positions.
  std::vector<CycleMember> distinct;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const auto& eig = spec.blocks[i].eig;
    auto it = std::find_if(distinct.begin(), distinct.end(), [&](const CycleMember& m) {
      return model::same_eigenvalue(m.eig, eig);
    });
    if (it == distinct.end())
      distinct.push_back({eig, {static_cast<int>(i)}});
    else
      it->block_indices.push_back(static_cast<int>(i));
  }

  // Greedy maximal grouping: same magnitude and exactly-rational phase ratio.
  std::vector<EigenvalueCycle> cycles;
  std::vector<char> used(distinct.size(), 0);
  for (std::size_t i = 0; i < distinct.size(); ++i) {
    if (used[i]) continue;
    EigenvalueCycle cyc;
    cyc.members.push_back(distinct[i]);
    used[i] = 1;
    for (std::size_t j = i + 1; j < distinct.size(); ++j) {
      if (used[j]) continue;
      if (!model::same_magnitude(distinct[i].eig.magnitude, distinct[j].eig.magnitude))
        continue;
      if (rational_phase_difference(distinct[i].eig.phase, distinct[j].eig.phase)) {
        cyc.members.push_back(distinct[j]);
        used[j] = 1;
      }
    }
    cyc.nu = 0;
    cyc.p = 1;
    for (const auto& mem : cyc.members) {
      cyc.nu += static_cast<int>(mem.block_indices.size());
      const auto diff =
          rational_phase_difference(mem.eig.phase, cyc.members.front().eig.phase);
      cyc.p = saturating_lcm(cyc.p, diff->second);
    }
    cycles.push_back(std::move(cyc));
  }

  std::stable_sort(cycles.begin(), cycles.end(),
                   [](const EigenvalueCycle& a, const EigenvalueCycle& b) {
                     if (a.magnitude() != b.magnitude())
                       return a.magnitude() > b.magnitude();
                     return a.p < b.p;
                   });
  return cycles;
}

ComplexMatrix restrict_columns(const model::SystemSpec& spec,
                               const EigenvalueCycle& cycle) {
  const std::vector<int> firsts = spec.first_positions();
  const std::vector<int> blocks = cycle.all_block_indices();
  ComplexMatrix Ci(spec.C.rows(), static_cast<Eigen::Index>(blocks.size()));
  for (std::size_t k = 0; k < blocks.size(); ++k)
    Ci.col(static_cast<Eigen::Index>(k)) =
        spec.C.col(firsts[static_cast<std::size_t>(blocks[k])]);
  return Ci;
}

int compute_l(const EigenvalueCycle& cycle, const ComplexMatrix& Ci, double rel_tol,
              bool normalize_rows, std::int64_t max_period) {
  if (max_period < 1) throw std::invalid_argument("max_period must be >= 1");
  if (cycle.p > max_period)
    throw EnumerationCapError("cycle period " + std::to_string(cycle.p) +
                              " exceeds the enumeration cap " +
                              std::to_string(max_period));
  const int p = static_cast<int>(cycle.p);
  const int nu = cycle.nu;
  if (Ci.cols() != nu)
    throw std::invalid_argument("restricted C has wrong column count for cycle");
  const std::vector<Complex> units = column_units(cycle);
  const double mag = cycle.magnitude();

  std::vector<char> erased(static_cast<std::size_t>(p), 0);
  // Cardinality-ordered search with early exit: the first k whose erasure
  // pattern kills rank is minimal by construction.
  for (int k = 0; k <= p; ++k) {
    std::vector<int> idx(static_cast<std::size_t>(k));
    std::iota(idx.begin(), idx.end(), 0);
    bool more = true;
    while (more) {
      std::fill(erased.begin(), erased.end(), 0);
      for (int s : idx) erased[static_cast<std::size_t>(s)] = 1;
      const ComplexMatrix G = stack_survivors(Ci, units, mag, erased, normalize_rows);
      if (rank_deficient(G, nu, rel_tol)) return k;
      more = k > 0 && next_combination(idx, p);
    }
  }
  return p;
}

CriticalReport critical_erasure(const model::SystemSpec& spec, double rel_tol,
                                std::int64_t max_period) {
  CriticalReport report;
  report.cycles = partition_cycles(spec);
  report.all_stable = true;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < report.cycles.size(); ++i) {
    auto& cyc = report.cycles[i];
    cyc.l = compute_l(cyc, restrict_columns(spec, cyc), rel_tol, true, max_period);
    const double mag = cyc.magnitude();
    if (mag >= 1.0) report.all_stable = false;
    if (cyc.l == 0 && mag >= 1.0) report.unobservable_unstable = true;
    const double thr = cycle_threshold(mag, cyc.p, cyc.l);
    report.per_cycle_threshold.push_back(thr);
    if (thr < best) {
      best = thr;
      report.bottleneck_cycle = static_cast<int>(i);
    }
  }
  report.critical = std::clamp(best, 0.0, 1.0);
  return report;
}

std::optional<double> critical_no_cycle_fastpath(const model::SystemSpec& spec) {
  const auto cycles = partition_cycles(spec);
  double max_mag = 0.0;
  for (const auto& cyc : cycles) {
    if (cyc.p != 1) return std::nullopt;
    max_mag = std::max(max_mag, cyc.magnitude());
  }
  return std::clamp(1.0 / (max_mag * max_mag), 0.0, 1.0);
}

int ParallelSpec::state_dim() const {
  int m = 0;
  for (const auto& b : blocks) m += b.size;
  return m;
}

void ParallelSpec::validate() const {
  if (blocks.empty()) throw std::invalid_argument("parallel spec has no Jordan blocks");
  if (channels.empty()) throw std::invalid_argument("parallel spec has no channels");
  if (channels.size() != erasure_probs.size())
    throw std::invalid_argument("one erasure probability per channel required");
  const int m = state_dim();
  for (const auto& Cj : channels)
    if (Cj.cols() != m)
      throw std::invalid_argument("channel matrix column count must equal state dim");
  for (double pe : erasure_probs)
    if (!(pe >= 0.0 && pe <= 1.0))
      throw std::invalid_argument("erasure probabilities must lie in [0, 1]");
  if (!(sigma_prime > 0) || !(sigma >= sigma_prime))
    throw std::invalid_argument("noise bounds require 0 < sigma_prime <= sigma");
}

namespace {

// Stacks the surviving rows of every channel for one erasure pattern.
ComplexMatrix stack_parallel(const std::vector<ComplexMatrix>& Cis,
                             const std::vector<Complex>& units, double magnitude,
                             const std::vector<std::vector<char>>& erased) {
  const auto d = Cis.size();
  const Eigen::Index nu = Cis.front().cols();
  Eigen::Index rows = 0;
  for (std::size_t j = 0; j < d; ++j) {
    Eigen::Index surv = 0;
    for (char e : erased[j])
      if (!e) ++surv;
    rows += surv * Cis[j].rows();
  }
  ComplexMatrix G(rows, nu);
  Eigen::Index at = 0;
  for (std::size_t j = 0; j < d; ++j) {
    const Eigen::Index lj = Cis[j].rows();
    std::vector<Complex> pow(units.size(), Complex{1.0, 0.0});
    for (std::size_t s = 0; s < erased[j].size(); ++s) {
      if (!erased[j][s]) {
        for (Eigen::Index c = 0; c < nu; ++c)
          G.block(at, c, lj, 1) = Cis[j].col(c) * pow[static_cast<std::size_t>(c)];
        at += lj;
      }
      for (std::size_t c = 0; c < pow.size(); ++c) pow[c] *= units[c];
    }
  }
  (void)magnitude;  // rows are kept normalized; rank is scaling-invariant
  return G;
}

// All cardinality vectors with the given total, entries in [0, p].
void vectors_with_sum(int d, int p, int total, std::vector<int>& cur,
                      std::vector<std::vector<int>>& out) {
  if (d == 1) {
    if (total <= p) {
      cur.push_back(total);
      out.push_back(cur);
      cur.pop_back();
    }
    return;
  }
  for (int k = std::max(0, total - (d - 1) * p); k <= std::min(p, total); ++k) {
    cur.push_back(k);
    vectors_with_sum(d - 1, p, total - k, cur, out);
    cur.pop_back();
  }
}

bool dominates(const std::vector<int>& a, const std::vector<int>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] > b[i]) return false;
  return true;  // a <= b componentwise
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / i;
  return r;
}

}  // namespace

ParallelReport parallel_stability_margin(const ParallelSpec& pspec, double rel_tol) {
  pspec.validate();
  const int d = static_cast<int>(pspec.channels.size());

  // Cycle structure depends only on the blocks; reuse the single-channel
  // partition via a spec that stacks all channels (C content is irrelevant).
  model::SystemSpec probe;
  probe.blocks = pspec.blocks;
  probe.B = ComplexMatrix::Identity(pspec.state_dim(), pspec.state_dim());
  probe.C = ComplexMatrix::Ones(1, pspec.state_dim());
  probe.sigma = pspec.sigma;
  probe.sigma_prime = pspec.sigma_prime;
  const auto cycles = partition_cycles(probe);

  ParallelReport report;
  report.stable = true;
  double worst = 0.0;
  std::uint64_t budget_used = 0;

  for (std::size_t ci = 0; ci < cycles.size(); ++ci) {
    const auto& cyc = cycles[ci];
    if (cyc.p > kMaxPeriod)
      throw EnumerationCapError(
          "parallel enumeration infeasible for (p, d) = (" + std::to_string(cyc.p) +
          ", " + std::to_string(d) + "): period exceeds cap " +
          std::to_string(kMaxPeriod));
    const int p = static_cast<int>(cyc.p);
    const std::vector<Complex> units = column_units(cyc);

    std::vector<ComplexMatrix> Cis;
    Cis.reserve(static_cast<std::size_t>(d));
    for (const auto& Cj : pspec.channels) {
      model::SystemSpec tmp = probe;
      tmp.C = Cj;
      Cis.push_back(restrict_columns(tmp, cyc));
    }

    // Minimal rank-killing cardinality vectors, found in total-sum order with
    // domination pruning; (p,..,p) is always feasible so the set is nonempty.
    std::vector<std::vector<int>> minimal;
    for (int total = 0; total <= d * p; ++total) {
      std::vector<std::vector<int>> candidates;
      std::vector<int> cur;
      vectors_with_sum(d, p, total, cur, candidates);
      for (const auto& vec : candidates) {
        bool dominated = false;
        for (const auto& fb : minimal)
          if (dominates(fb, vec)) {
            dominated = true;
            break;
          }
        if (dominated) continue;

        std::uint64_t patterns = 1;
        for (int j = 0; j < d; ++j)
          patterns *= binomial(p, vec[static_cast<std::size_t>(j)]);
        budget_used += patterns;
        if (budget_used > kParallelPatternBudget)
          throw EnumerationCapError(
              "parallel enumeration infeasible for (p, d) = (" + std::to_string(p) +
              ", " + std::to_string(d) + "): survivor-pattern budget " +
              std::to_string(kParallelPatternBudget) + " exceeded");

        // Does some per-channel erasure assignment with these cardinalities
        // kill rank? Nested combination enumeration with early exit.
        std::vector<std::vector<int>> idx(static_cast<std::size_t>(d));
        std::vector<std::vector<char>> erased(
            static_cast<std::size_t>(d), std::vector<char>(static_cast<std::size_t>(p), 0));
        for (int j = 0; j < d; ++j) {
          idx[static_cast<std::size_t>(j)].resize(
              static_cast<std::size_t>(vec[static_cast<std::size_t>(j)]));
          std::iota(idx[static_cast<std::size_t>(j)].begin(),
                    idx[static_cast<std::size_t>(j)].end(), 0);
        }
        bool found = false;
        while (!found) {
          for (int j = 0; j < d; ++j) {
            auto& ej = erased[static_cast<std::size_t>(j)];
            std::fill(ej.begin(), ej.end(), 0);
            for (int s : idx[static_cast<std::size_t>(j)]) ej[static_cast<std::size_t>(s)] = 1;
          }
          const ComplexMatrix G = stack_parallel(Cis, units, cyc.magnitude(), erased);
          if (G.rows() == 0 ? cyc.nu > 0
                            : model::rank_with_tolerance(G, rel_tol) < cyc.nu) {
            found = true;
            break;
          }
          // Odometer over the d combination counters.
          int j = d - 1;
          while (j >= 0 && !next_combination(idx[static_cast<std::size_t>(j)], p)) {
            auto& ij = idx[static_cast<std::size_t>(j)];
            std::iota(ij.begin(), ij.end(), 0);
            --j;
          }
          if (j < 0) break;
        }
        if (found) minimal.push_back(vec);
      }
    }

    // Worst product over minimal vectors (max; p_e <= 1 makes it attained here).
    for (const auto& vec : minimal) {
      double log_val = 2.0 * std::log(cyc.magnitude());
      bool zero = false;
      for (int j = 0; j < d; ++j) {
        const int lj = vec[static_cast<std::size_t>(j)];
        if (lj == 0) continue;  // p^0 = 1, including 0^0
        const double pe = pspec.erasure_probs[static_cast<std::size_t>(j)];
        if (pe == 0.0) {
          zero = true;
          break;
        }
        log_val += (static_cast<double>(lj) / p) * std::log(pe);
      }
      const double val = zero ? 0.0 : std::exp(log_val);
      if (val > worst) {
        worst = val;
        report.binding_cycle = static_cast<int>(ci);
        report.binding_cardinalities = vec;
      }
    }
  }

  report.stable = worst < 1.0;
  report.margin = 1.0 - worst;
  return report;
}

std::pair<double, double> bound_sandwich(const model::SystemSpec& spec) {
  spec.validate();
  double log_prod = 0.0;
  double max_mag = 0.0;
  for (const auto& b : spec.blocks) {
    const double mag = b.eig.magnitude;
    if (mag > 1.0) log_prod += 2.0 * b.size * std::log(mag);
    max_mag = std::max(max_mag, mag);
  }
  // Same log-space evaluation as cycle_threshold so that when the exact
  // threshold ties an endpoint the computed doubles tie as well.
  return {std::exp(-log_prod), std::exp(-2.0 * std::log(max_mag))};
}

}  // namespace ikf::spectral
