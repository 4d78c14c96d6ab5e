#pragma once

// Truncated power series, the G-series / K-series pair of a measure, and two
// independent routes to free cumulants: formal series inversion and the
// contour-integral form of Lagrange inversion. A third route through
// non-crossing partitions serves as an oracle.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "freeprob/detail/nc_partitions.hpp"
#include "freeprob/errors.hpp"
#include "freeprob/measure.hpp"

namespace freeprob {

inline constexpr std::size_t kDefaultSeriesOrder = 16;

/// Real power series c_0 + c_1 x + ... + c_N x^N. Every operation truncates at
/// the order of its left operand.
class TruncatedSeries {
 public:
  TruncatedSeries() = default;
  explicit TruncatedSeries(std::size_t order) : coeffs_(order + 1, 0.0) {}
  explicit TruncatedSeries(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
    if (coeffs_.empty()) throw ValidationError("series needs at least the constant coefficient");
  }

  /// The series x truncated at the given order.
  static TruncatedSeries identity(std::size_t order) {
    TruncatedSeries s(order);
    if (order >= 1) s.coeffs_[1] = 1.0;
    return s;
  }

  [[nodiscard]] std::size_t order() const noexcept { return coeffs_.size() - 1; }
  [[nodiscard]] std::span<const double> coeffs() const noexcept { return coeffs_; }
  [[nodiscard]] double operator[](std::size_t k) const { return k < coeffs_.size() ? coeffs_[k] : 0.0; }
  double& at(std::size_t k) { return coeffs_.at(k); }

  [[nodiscard]] TruncatedSeries truncated(std::size_t order) const {
    std::vector<double> c(order + 1, 0.0);
    for (std::size_t k = 0; k <= order && k < coeffs_.size(); ++k) c[k] = coeffs_[k];
    return TruncatedSeries(std::move(c));
  }

  template <typename T>
  [[nodiscard]] T evaluate(T x) const {
    T acc = T(coeffs_.back());
    for (std::size_t k = coeffs_.size() - 1; k-- > 0;) acc = acc * x + T(coeffs_[k]);
    return acc;
  }

  TruncatedSeries& operator+=(const TruncatedSeries& o) {
    for (std::size_t k = 0; k < coeffs_.size(); ++k) coeffs_[k] += o[k];
    return *this;
  }
  TruncatedSeries& operator-=(const TruncatedSeries& o) {
    for (std::size_t k = 0; k < coeffs_.size(); ++k) coeffs_[k] -= o[k];
    return *this;
  }
  TruncatedSeries& operator*=(double s) {
    for (double& c : coeffs_) c *= s;
    return *this;
  }

  friend TruncatedSeries operator+(TruncatedSeries a, const TruncatedSeries& b) { return a += b; }
  friend TruncatedSeries operator-(TruncatedSeries a, const TruncatedSeries& b) { return a -= b; }
  friend TruncatedSeries operator*(TruncatedSeries a, double s) { return a *= s; }

  friend TruncatedSeries operator*(const TruncatedSeries& a, const TruncatedSeries& b) {
    const std::size_t n = a.order();
    TruncatedSeries out(n);
    for (std::size_t i = 0; i <= n; ++i) {
      if (a.coeffs_[i] == 0.0) continue;
      for (std::size_t j = 0; i + j <= n && j <= b.order(); ++j) out.coeffs_[i + j] += a.coeffs_[i] * b.coeffs_[j];
    }
    return out;
  }

 private:
  std::vector<double> coeffs_{0.0};
};

/// 1 / s, requires s[0] != 0.
inline TruncatedSeries reciprocal(const TruncatedSeries& s) {
  if (s[0] == 0.0) throw ValidationError("reciprocal of a series with zero constant term");
  const std::size_t n = s.order();
  TruncatedSeries out(n);
  out.at(0) = 1.0 / s[0];
  for (std::size_t k = 1; k <= n; ++k) {
    double acc = 0.0;
    for (std::size_t j = 1; j <= k; ++j) acc += s[j] * out[k - j];
    out.at(k) = -acc / s[0];
  }
  return out;
}

/// f(g(x)) truncated at f's order; requires g[0] == 0.
inline TruncatedSeries compose(const TruncatedSeries& f, const TruncatedSeries& g) {
  if (g[0] != 0.0) throw ValidationError("inner series of a composition must vanish at 0");
  const TruncatedSeries inner = g.truncated(f.order());
  TruncatedSeries acc(f.order());
  for (std::size_t k = f.order() + 1; k-- > 0;) {
    acc = acc * inner;
    acc.at(0) += f[k];
  }
  return acc;
}

/// Compositional inverse h of f = x + f_2 x^2 + ..., i.e. f(h(x)) = x.
inline TruncatedSeries reversion(const TruncatedSeries& f) {
  if (f[0] != 0.0 || f[1] == 0.0) throw ValidationError("reversion needs f(0) = 0 and f'(0) != 0");
  const std::size_t n = f.order();
  // f(x) = x * d(x); solve h = x / d(h) by fixed point, one coefficient per pass.
  TruncatedSeries d(n);
  for (std::size_t k = 0; k < n; ++k) d.at(k) = f[k + 1];
  TruncatedSeries h = TruncatedSeries::identity(n) * (1.0 / f[1]);
  const TruncatedSeries x = TruncatedSeries::identity(n);
  for (std::size_t pass = 0; pass < n; ++pass) h = x * reciprocal(compose(d, h));
  return h;
}

/// Laurent expansion of G at infinity: coeffs[k] multiplies z^-(k+1), so
/// coeffs = (1, m_1, ..., m_N).
struct GSeries {
  std::vector<double> coeffs{1.0};

  [[nodiscard]] std::size_t order() const noexcept { return coeffs.size() - 1; }
  [[nodiscard]] double moment(std::size_t k) const { return coeffs.at(k); }
};

/// K(w) = 1/w + kappa_1 + kappa_2 w + ... + kappa_N w^(N-1). The pole
/// coefficient is fixed at 1; kappa holds the free cumulants.
struct KSeries {
  std::vector<double> kappa;

  [[nodiscard]] std::size_t order() const noexcept { return kappa.size(); }
  [[nodiscard]] double cumulant(std::size_t n) const { return kappa.at(n - 1); }

  /// The regular part R(w) = K(w) - 1/w.
  template <typename T>
  [[nodiscard]] T r_value(T w) const {
    T acc = T(0);
    for (std::size_t k = kappa.size(); k-- > 0;) acc = acc * w + T(kappa[k]);
    return acc;
  }
  template <typename T>
  [[nodiscard]] T value(T w) const { return T(1) / w + r_value(w); }

  [[nodiscard]] double derivative(double w) const {
    double acc = 0.0;
    for (std::size_t k = kappa.size(); k-- > 1;) acc = acc * w + static_cast<double>(k) * kappa[k];
    return acc - 1.0 / (w * w);
  }
};

inline GSeries g_from_moments(const MomentVector& m) {
  if (m.order() == 0) throw ValidationError("G-series needs at least one moment");
  GSeries g;
  g.coeffs.assign(1, 1.0);
  g.coeffs.insert(g.coeffs.end(), m.values.begin(), m.values.end());
  return g;
}

/// Formal inverse of the G-series.
///
/// Uses the generating-function identity M(z) = C(z M(z)) with
/// M = 1 + sum m_n z^n and C = 1 + sum kappa_n z^n, which gives
/// kappa_n = m_n - sum_{s<n} kappa_s [z^(n-s)] M(z)^s.
inline KSeries k_from_g_formal(const GSeries& g) {
  const std::size_t n = g.order();
  if (n == 0) throw ValidationError("K-series needs a G-series of order >= 1");
  const TruncatedSeries moment_gf(g.coeffs);
  std::vector<TruncatedSeries> powers;
  powers.reserve(n);
  powers.push_back(moment_gf);
  for (std::size_t s = 1; s < n; ++s) powers.push_back(powers.back() * moment_gf);

  KSeries k;
  k.kappa.assign(n, 0.0);
  for (std::size_t order = 1; order <= n; ++order) {
    double acc = g.coeffs[order];
    for (std::size_t s = 1; s < order; ++s) acc -= k.kappa[s - 1] * powers[s - 1][order - s];
    k.kappa[order - 1] = acc;
  }
  return k;
}

/// Inverse direction by series reversion: with u = 1/z, G(z) = w is
/// equivalent to u = w / C(w), so g(u) = G(1/u) is the reversion of w / C(w).
inline GSeries g_from_k_formal(const KSeries& k) {
  const std::size_t n = k.order();
  if (n == 0) throw ValidationError("G-series needs a K-series of order >= 1");
  TruncatedSeries c(n + 1);
  c.at(0) = 1.0;
  for (std::size_t j = 1; j <= n; ++j) c.at(j) = k.kappa[j - 1];
  const TruncatedSeries phi = TruncatedSeries::identity(n + 1) * reciprocal(c);
  const TruncatedSeries g = reversion(phi);
  GSeries out;
  out.coeffs.resize(n + 1);
  for (std::size_t j = 0; j <= n; ++j) out.coeffs[j] = g[j + 1];
  return out;
}

/// Max coefficient deviation of G(K(w)) from w, computed as g(w / C(w)) with
/// g(u) = G(1/u), through order min(N_G, N_K) + 1.
inline double formal_inverse_residual(const GSeries& g, const KSeries& k) {
  const std::size_t n = std::min(g.order(), k.order());
  TruncatedSeries c(n + 1);
  c.at(0) = 1.0;
  for (std::size_t j = 1; j <= n; ++j) c.at(j) = k.kappa[j - 1];
  const TruncatedSeries phi = TruncatedSeries::identity(n + 1) * reciprocal(c);
  TruncatedSeries outer(n + 1);
  for (std::size_t j = 0; j <= n; ++j) outer.at(j + 1) = g.coeffs[j];
  const TruncatedSeries composed = compose(outer, phi);
  double worst = 0.0;
  for (std::size_t j = 0; j <= n + 1; ++j) worst = std::max(worst, std::abs(composed[j] - (j == 1 ? 1.0 : 0.0)));
  return worst;
}

/// Result of the contour-integral inversion.
struct ContourInversion {
  KSeries k;               ///< kappa_1 = m_1, kappa_{j+1} = -b^(j)
  std::vector<double> b;   ///< b[j-1] = b^(j), j = 1..order
  std::size_t nodes = 0;   ///< trapezoid nodes of the accepted pass
  double last_change = 0;  ///< max coefficient change at the last doubling
  double radius = 0;
};

struct ContourOptions {
  std::size_t initial_nodes = 512;
  std::size_t max_nodes = 8192;
  double tolerance = 1e-10;
};

/// g(z) = G(1/z) = sum_j w_j z / (1 - t_j z), analytic for |z| < 1/L.
inline std::complex<double> g_reciprocal(const AtomicMeasure& mu, std::complex<double> z) {
  std::complex<double> acc = 0.0;
  const auto atoms = mu.atoms();
  const auto weights = mu.weights();
  for (std::size_t i = 0; i < atoms.size(); ++i) acc += weights[i] / (1.0 - atoms[i] * z);
  return acc * z;
}

/// Coefficients b^(k) = (1 / 2 pi i k) \oint dz / (z^2 g(z)^k) on |z| = radius,
/// by the trapezoid rule with node doubling. The constant term of the inverse
/// is taken as m_1 from the moments rather than from the contour.
inline ContourInversion lagrange_inversion(const AtomicMeasure& mu, std::size_t order, double radius,
                                           const ContourOptions& opt = {}) {
  if (order == 0) throw ValidationError("Lagrange inversion order must be at least 1");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ValidationError("contour radius must be positive and finite");
  const double L = mu.norm_bound();
  if (L > 0.0 && radius * L >= 1.0)
    throw ValidationError("contour radius " + std::to_string(radius) + " must be below 1/L = " +
                          std::to_string(1.0 / L));

  auto pass = [&](std::size_t nodes) {
    std::vector<double> b(order, 0.0);
    for (std::size_t j = 0; j < nodes; ++j) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(nodes);
      const std::complex<double> z = std::polar(radius, theta);
      const std::complex<double> inv_g = 1.0 / g_reciprocal(mu, z);
      std::complex<double> term = 1.0 / z;
      for (std::size_t k = 1; k <= order; ++k) {
        term *= inv_g;
        b[k - 1] += term.real();
      }
    }
    for (std::size_t k = 1; k <= order; ++k) b[k - 1] /= static_cast<double>(k) * static_cast<double>(nodes);
    return b;
  };

  ContourInversion out;
  out.radius = radius;
  std::size_t nodes = opt.initial_nodes;
  std::vector<double> b = pass(nodes);
  for (;;) {
    const std::size_t next = nodes * 2;
    if (next > opt.max_nodes) throw NumericError("contour quadrature did not converge", out.last_change);
    std::vector<double> refined = pass(next);
    double change = 0.0;
    double scale = 1.0;
    for (std::size_t k = 0; k < order; ++k) {
      change = std::max(change, std::abs(refined[k] - b[k]));
      scale = std::max(scale, std::abs(refined[k]));
    }
    out.last_change = change;
    b = std::move(refined);
    nodes = next;
    if (change <= opt.tolerance * scale) break;
  }

  out.nodes = nodes;
  out.b = b;
  out.k.kappa.assign(order + 1, 0.0);
  out.k.kappa[0] = mean(mu);
  for (std::size_t k = 1; k <= order; ++k) out.k.kappa[k] = -b[k - 1];
  return out;
}

/// Default contour radius 1/(2L); point masses at 0 get radius 1.
inline double default_contour_radius(const AtomicMeasure& mu) {
  const double L = mu.norm_bound();
  return L > 0.0 ? 0.5 / L : 1.0;
}

inline KSeries lagrange_coeffs(const AtomicMeasure& mu, std::size_t order, double radius) {
  return lagrange_inversion(mu, order, radius).k;
}

inline KSeries lagrange_coeffs(const AtomicMeasure& mu, std::size_t order) {
  return lagrange_coeffs(mu, order, default_contour_radius(mu));
}

/// Free cumulants from moments by explicit sums over non-crossing partitions.
inline std::vector<double> cumulants_from_moments_nc(const MomentVector& m) {
  const std::size_t n = m.order();
  if (n > detail::kMaxNcOrder)
    throw ValidationError("non-crossing enumeration is limited to order " + std::to_string(detail::kMaxNcOrder));
  std::vector<double> kappa(n, 0.0);
  for (std::size_t order = 1; order <= n; ++order) {
    double acc = 0.0;
    for (const auto& [sizes, count] : detail::nc_signatures(order)) {
      if (sizes.size() == 1) continue;  // the one-block partition carries kappa_order
      double prod = static_cast<double>(count);
      for (int s : sizes) prod *= kappa[static_cast<std::size_t>(s) - 1];
      acc += prod;
    }
    kappa[order - 1] = m.values[order - 1] - acc;
  }
  return kappa;
}

inline MomentVector moments_from_cumulants_nc(std::span<const double> kappa) {
  const std::size_t n = kappa.size();
  if (n > detail::kMaxNcOrder)
    throw ValidationError("non-crossing enumeration is limited to order " + std::to_string(detail::kMaxNcOrder));
  MomentVector m{std::vector<double>(n, 0.0)};
  for (std::size_t order = 1; order <= n; ++order) {
    double acc = 0.0;
    for (const auto& [sizes, count] : detail::nc_signatures(order)) {
      double prod = static_cast<double>(count);
      for (int s : sizes) prod *= kappa[static_cast<std::size_t>(s) - 1];
      acc += prod;
    }
    m.values[order - 1] = acc;
  }
  return m;
}

}  // namespace freeprob
