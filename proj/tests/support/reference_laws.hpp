#pragma once

// Closed-form laws used as independent references in the tests.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "freeprob/measure.hpp"

namespace freeprob::testing {

using cplx = std::complex<double>;

/// sqrt(z - a) sqrt(z - b): analytic off [a, b] and ~ z at infinity.
inline cplx cut_sqrt(cplx z, double a, double b) { return std::sqrt(z - a) * std::sqrt(z - b); }

/// Semicircle law of variance a2.
inline cplx semicircle_cauchy(double a2, cplx z) {
  const double r = 2.0 * std::sqrt(a2);
  return (z - cut_sqrt(z, -r, r)) / (2.0 * a2);
}

/// Arcsine law on [-2, 2], the free convolution of two +-1 coins.
inline cplx arcsine_cauchy(cplx z) { return 1.0 / cut_sqrt(z, -2.0, 2.0); }
inline double arcsine_density(double x) {
  return std::abs(x) < 2.0 ? 1.0 / (std::numbers::pi * std::sqrt(4.0 - x * x)) : 0.0;
}
inline double arcsine_cdf(double x) {
  if (x <= -2.0) return 0.0;
  if (x >= 2.0) return 1.0;
  return 0.5 + std::asin(x / 2.0) / std::numbers::pi;
}

/// K of (+-1 coin) boxplus (+-1 coin): sqrt(1 + 4 w^2) / w.
inline double arcsine_k(double w) { return std::sqrt(1.0 + 4.0 * w * w) / w; }

/// K of the +-1 coin: (sqrt(1 + 4 w^2) - 1) / (2 w) + 1 / w.
inline double coin_k(double w) { return (std::sqrt(1.0 + 4.0 * w * w) - 1.0) / (2.0 * w) + 1.0 / w; }

/// Sum of n free copies of a*(+-1): K(w) = (n/2)(sqrt(1 + 4 a^2 w^2) - 1)/w + 1/w.
inline double coin_sum_k(std::size_t n, double a, double w) {
  // (sqrt(1 + x) - 1) / w written as x / ((sqrt(1 + x) + 1) w) to avoid cancellation.
  const double x = 4.0 * a * a * w * w;
  return 0.5 * static_cast<double>(n) * (4.0 * a * a * w) / (std::sqrt(1.0 + x) + 1.0) + 1.0 / w;
}

/// Right edge of n free copies of the law with weight p at -sqrt(q/p) and q at
/// sqrt(p/q), divided by sqrt(n) (continuous part; there is an extra atom when
/// n min(p, q) < 1).
inline double binomial_right_edge(double p, double n) {
  const double q = 1.0 - p;
  return 2.0 * std::sqrt(1.0 - 1.0 / n) + (p - q) / std::sqrt(p * q) / std::sqrt(n);
}
inline double binomial_left_edge(double p, double n) {
  const double q = 1.0 - p;
  return -2.0 * std::sqrt(1.0 - 1.0 / n) + (p - q) / std::sqrt(p * q) / std::sqrt(n);
}

/// Random centered measure with 2..4 atoms in [-1, 1]-ish, not too lopsided.
template <class Rng>
AtomicMeasure random_centered_measure(Rng& rng, int min_atoms = 2, int max_atoms = 4) {
  std::uniform_int_distribution<int> count(min_atoms, max_atoms);
  std::uniform_real_distribution<double> pos(-1.0, 1.0);
  std::uniform_real_distribution<double> wt(0.2, 1.0);
  for (;;) {
    const int n = count(rng);
    std::vector<double> t(static_cast<std::size_t>(n));
    std::vector<double> w(static_cast<std::size_t>(n));
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      t[static_cast<std::size_t>(i)] = pos(rng);
      w[static_cast<std::size_t>(i)] = wt(rng);
      total += w[static_cast<std::size_t>(i)];
    }
    double m1 = 0.0;
    for (int i = 0; i < n; ++i) {
      w[static_cast<std::size_t>(i)] /= total;
      m1 += w[static_cast<std::size_t>(i)] * t[static_cast<std::size_t>(i)];
    }
    double spread = 0.0;
    for (double& x : t) {
      x -= m1;
      spread = std::max(spread, std::abs(x));
    }
    if (spread < 0.2) continue;
    double wsum = 0.0;
    for (double x : w) wsum += x;
    w.back() += 1.0 - wsum;
    return AtomicMeasure(t, w);
  }
}

/// Random measure without centering, atoms in [-L, L].
template <class Rng>
AtomicMeasure random_measure(Rng& rng, double L = 1.0, int min_atoms = 2, int max_atoms = 4) {
  std::uniform_int_distribution<int> count(min_atoms, max_atoms);
  std::uniform_real_distribution<double> pos(-L, L);
  std::uniform_real_distribution<double> wt(0.1, 1.0);
  const int n = count(rng);
  std::vector<double> t(static_cast<std::size_t>(n));
  std::vector<double> w(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    t[static_cast<std::size_t>(i)] = pos(rng);
    w[static_cast<std::size_t>(i)] = wt(rng);
    total += w[static_cast<std::size_t>(i)];
  }
  double wsum = 0.0;
  for (double& x : w) {
    x /= total;
    wsum += x;
  }
  w.back() += 1.0 - wsum;
  return AtomicMeasure(t, w);
}

}  // namespace freeprob::testing
