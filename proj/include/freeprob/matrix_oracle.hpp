#pragma once

// Random-matrix check of free convolutions: sums of independently
// Haar-rotated diagonal matrices whose spectra discretize the row members.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "freeprob/errors.hpp"
#include "freeprob/freeconv.hpp"
#include "freeprob/measure.hpp"
#include "freeprob/superconv.hpp"
#include "freeprob/transform.hpp"

namespace freeprob {

struct McConfig {
  std::size_t N = 256;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  RowSpec row;
};

/// Dense row-major square matrix.
class SquareMatrix {
 public:
  explicit SquareMatrix(std::size_t n = 0) : n_(n), a_(n * n, 0.0) {}
  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return a_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * n_ + j]; }
  double* row(std::size_t i) { return a_.data() + i * n_; }
  [[nodiscard]] const double* row(std::size_t i) const { return a_.data() + i * n_; }

 private:
  std::size_t n_;
  std::vector<double> a_;
};

/// Diagonal of length N: atom t repeated round(w N) times, the rounding
/// done by largest remainder so the counts sum to N. Ascending.
inline std::vector<double> quantile_diagonal(const AtomicMeasure& mu, std::size_t N) {
  const auto atoms = mu.atoms();
  const auto weights = mu.weights();
  std::vector<std::size_t> counts(atoms.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t used = 0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double exact = weights[i] * static_cast<double>(N);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    used += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; used < N; ++j, ++used) ++counts[remainders[j % remainders.size()].second];
  std::vector<double> d;
  d.reserve(N);
  for (std::size_t i = 0; i < atoms.size(); ++i) d.insert(d.end(), counts[i], atoms[i]);
  return d;
}

/// Haar orthogonal matrix: modified Gram-Schmidt QR of a standard Gaussian
/// matrix. MGS yields R with positive diagonal, which is the sign fix that
/// makes Q Haar distributed. Columns of Q are stored as rows of the result.
template <class Rng>
SquareMatrix haar_orthogonal_rows(std::size_t N, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  SquareMatrix q(N);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) q(i, j) = gauss(rng);
  for (std::size_t j = 0; j < N; ++j) {
    double* v = q.row(j);
    for (std::size_t i = 0; i < j; ++i) {
      const double* u = q.row(i);
      const double r = std::inner_product(u, u + N, v, 0.0);
      for (std::size_t k = 0; k < N; ++k) v[k] -= r * u[k];
    }
    const double norm = std::sqrt(std::inner_product(v, v + N, v, 0.0));
    if (!(norm > 0.0)) throw NumericError("Gaussian matrix is rank deficient");
    for (std::size_t k = 0; k < N; ++k) v[k] /= norm;
  }
  return q;
}

struct JacobiResult {
  std::vector<double> eigenvalues;  ///< ascending
  std::size_t sweeps = 0;
  bool converged = false;
};

/// Cyclic Jacobi with round-robin pair ordering: every sweep runs N - 1 rounds,
/// each rotating N/2 disjoint pairs, so rows are updated contiguously. Stops
/// when the off-diagonal Frobenius norm is below tol * ||A||_F; pairs whose
/// entry is already negligible are not rotated.
inline JacobiResult jacobi_eigenvalues(SquareMatrix a, double tol = 1e-10, std::size_t max_sweeps = 100) {
  const std::size_t n = a.size();
  JacobiResult res;
  if (n == 0) {
    res.converged = true;
    return res;
  }
  const std::size_t m = n + (n % 2);  // one dummy index when n is odd
  std::vector<std::size_t> players(m);
  std::iota(players.begin(), players.end(), std::size_t{0});

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) total += a(i, j) * a(i, j);
  const double target = tol * std::sqrt(total);
  // Entries below this never need a rotation: all of them together stay under
  // a quarter of the target.
  const double skip = target / (4.0 * static_cast<double>(n));

  auto off_norm = [&] {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) off += a(i, j) * a(i, j);
    return std::sqrt(off);
  };

  struct Rot {
    std::size_t p, q;
    double c, s;
  };
  std::vector<Rot> rots;
  rots.reserve(m / 2);

  for (res.sweeps = 0; res.sweeps < max_sweeps; ++res.sweeps) {
    if (off_norm() <= target) {
      res.converged = true;
      break;
    }
    for (std::size_t round = 0; round + 1 < m; ++round) {
      rots.clear();
      for (std::size_t k = 0; k < m / 2; ++k) {
        std::size_t p = players[k];
        std::size_t q = players[m - 1 - k];
        if (p >= n || q >= n) continue;
        if (p > q) std::swap(p, q);
        const double apq = a(p, q);
        if (std::abs(apq) <= skip) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        rots.push_back({p, q, c, t * c});
      }
      for (const Rot& r : rots) {
        double* rp = a.row(r.p);
        double* rq = a.row(r.q);
        for (std::size_t k = 0; k < n; ++k) {
          const double x = rp[k];
          const double y = rq[k];
          rp[k] = r.c * x - r.s * y;
          rq[k] = r.s * x + r.c * y;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        double* ri = a.row(i);
        for (const Rot& r : rots) {
          const double x = ri[r.p];
          const double y = ri[r.q];
          ri[r.p] = r.c * x - r.s * y;
          ri[r.q] = r.s * x + r.c * y;
        }
      }
      for (const Rot& r : rots) {
        a(r.p, r.q) = 0.0;
        a(r.q, r.p) = 0.0;
      }
      // Rotate the tournament: first player fixed, the rest shift by one.
      std::rotate(players.begin() + 1, players.end() - 1, players.end());
    }
  }
  if (!res.converged && off_norm() <= target) res.converged = true;
  res.eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.eigenvalues[i] = a(i, i);
  std::sort(res.eigenvalues.begin(), res.eigenvalues.end());
  return res;
}

/// Q diag(d) Q^T with Q given by its columns stored as rows.
inline void add_rotated_diagonal(SquareMatrix& acc, const SquareMatrix& q_cols, const std::vector<double>& d) {
  const std::size_t n = acc.size();
  // acc(i, j) += sum_k d_k Q(i, k) Q(j, k); with columns as rows this is
  // sum_k d_k col_k[i] col_k[j], a sum of rank-one updates.
  for (std::size_t k = 0; k < n; ++k) {
    const double* u = q_cols.row(k);
    const double dk = d[k];
    if (dk == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = dk * u[i];
      double* ri = acc.row(i);
      for (std::size_t j = 0; j < n; ++j) ri[j] += s * u[j];
    }
  }
}

struct SpectrumSample {
  std::vector<std::vector<double>> trials;  ///< sorted eigenvalues per kept trial
  std::vector<std::size_t> trial_ids;       ///< original trial index of each kept trial
  std::size_t dropped = 0;
};

inline std::mt19937_64 trial_rng(std::uint64_t seed, std::size_t trial) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
  return std::mt19937_64(seq);
}

/// Eigenvalues of sum_i Q_i D_i Q_i^T per trial. The first summand is left
/// unrotated: conjugating the whole sum by Q_1^T leaves the spectrum unchanged
/// and Q_1^T Q_i is again Haar and independent.
inline SpectrumSample sample_sum_spectrum(const McConfig& cfg) {
  if (cfg.N < 8) throw ValidationError("matrix dimension N must be at least 8");
  if (cfg.trials < 1) throw ValidationError("need at least one trial");
  if (cfg.row.size() > 100000) throw ValidationError("row too long for the matrix oracle (k_n > 1e5)");
  SpectrumSample out;
  const std::size_t n = cfg.N;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    std::mt19937_64 rng = trial_rng(cfg.seed, t);
    SquareMatrix acc(n);
    bool first = true;
    for (const RowGroup& g : cfg.row.groups()) {
      const std::vector<double> d = quantile_diagonal(g.measure, n);
      for (std::uint64_t c = 0; c < g.count; ++c) {
        if (first) {
          for (std::size_t i = 0; i < n; ++i) acc(i, i) += d[i];
          first = false;
          continue;
        }
        add_rotated_diagonal(acc, haar_orthogonal_rows(n, rng), d);
      }
    }
    // Symmetrize away rounding so the Jacobi iteration sees an exactly
    // symmetric matrix.
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double s = 0.5 * (acc(i, j) + acc(j, i));
        acc(i, j) = s;
        acc(j, i) = s;
      }
    JacobiResult jr = jacobi_eigenvalues(std::move(acc));
    if (!jr.converged) {
      ++out.dropped;
      continue;
    }
    out.trials.push_back(std::move(jr.eigenvalues));
    out.trial_ids.push_back(t);
  }
  return out;
}

inline void write_spectra_csv(std::ostream& os, const SpectrumSample& s) {
  os << "trial,index,eigenvalue\n";
  for (std::size_t t = 0; t < s.trials.size(); ++t)
    for (std::size_t i = 0; i < s.trials[t].size(); ++i)
      os << s.trial_ids[t] << ',' << i << ',' << format_double(s.trials[t][i]) << '\n';
}

struct EdgeGapReport {
  std::size_t trials = 0;
  std::size_t dropped = 0;
  double exceed_fraction = 0.0;  ///< trials with max eigenvalue outside the interval
  double predicted_edge = 0.0;
  double gap_min = 0.0;          ///< quantiles of max eigenvalue - predicted right edge
  double gap_median = 0.0;
  double gap_max = 0.0;
};

inline EdgeGapReport edge_gap_report(const SpectrumSample& s, const Certificate& cert) {
  if (s.trials.empty()) throw ValidationError("edge gap report needs at least one trial");
  EdgeGapReport r;
  r.trials = s.trials.size();
  r.dropped = s.dropped;
  r.predicted_edge = cert.right ? cert.right->edge : cert.interval_hi;
  std::vector<double> gaps;
  std::size_t exceed = 0;
  for (const auto& ev : s.trials) {
    const double top = ev.back();
    if (top >= cert.interval_hi || ev.front() <= cert.interval_lo) ++exceed;
    gaps.push_back(top - r.predicted_edge);
  }
  std::sort(gaps.begin(), gaps.end());
  r.exceed_fraction = static_cast<double>(exceed) / static_cast<double>(r.trials);
  r.gap_min = gaps.front();
  r.gap_median = gaps[gaps.size() / 2];
  r.gap_max = gaps.back();
  return r;
}

inline void write_edge_gap_record(std::ostream& os, const EdgeGapReport& r) {
  os << "trials: " << r.trials << '\n'
     << "dropped: " << r.dropped << '\n'
     << "exceed_fraction: " << format_double(r.exceed_fraction) << '\n'
     << "predicted_edge: " << format_double(r.predicted_edge) << '\n'
     << "gap_min: " << format_double(r.gap_min) << '\n'
     << "gap_median: " << format_double(r.gap_median) << '\n'
     << "gap_max: " << format_double(r.gap_max) << '\n';
}

/// Kolmogorov distance between the pooled empirical spectral CDF and a CDF
/// given on a sorted grid (linear interpolation, 0 left and 1 right of it).
inline double kolmogorov_distance(const SpectrumSample& s, const std::vector<double>& xs,
                                  const std::vector<double>& cdf) {
  std::vector<double> pooled;
  for (const auto& t : s.trials) pooled.insert(pooled.end(), t.begin(), t.end());
  std::sort(pooled.begin(), pooled.end());
  auto model = [&](double x) {
    if (x <= xs.front()) return 0.0;
    if (x >= xs.back()) return 1.0;
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - xs.begin());
    const double f = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    return cdf[j - 1] + f * (cdf[j] - cdf[j - 1]);
  };
  const double n = static_cast<double>(pooled.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    const double f = model(pooled[i]);
    worst = std::max({worst, std::abs(f - static_cast<double>(i) / n), std::abs(f - static_cast<double>(i + 1) / n)});
  }
  return worst;
}

/// Cumulative trapezoid integral of a density grid, normalized to end at 1.
inline std::vector<double> density_cdf(const DensityGrid& g) {
  std::vector<double> cdf(g.xs.size(), 0.0);
  for (std::size_t i = 1; i < g.xs.size(); ++i)
    cdf[i] = cdf[i - 1] + 0.5 * (g.values[i] + g.values[i - 1]) * (g.xs[i] - g.xs[i - 1]);
  if (cdf.back() > 0.0)
    for (double& c : cdf) c /= cdf.back();
  return cdf;
}

}  // namespace freeprob
