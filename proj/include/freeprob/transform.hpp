#pragma once

// Cauchy transform and K-function of atomic measures as functions, density
// recovery from boundary values of G, and the free CLT reference density.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <tuple>
#include <utility>
#include <string>
#include <vector>

#include "freeprob/errors.hpp"
#include "freeprob/measure.hpp"

namespace freeprob {

using complex = std::complex<double>;

/// G(z) = sum_i w_i / (z - t_i).
inline complex cauchy_eval(const AtomicMeasure& mu, complex z) {
  const auto atoms = mu.atoms();
  const auto weights = mu.weights();
  complex acc = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (z.imag() == 0.0 && z.real() == atoms[i])
      throw ValidationError("Cauchy transform evaluated at the atom " + std::to_string(atoms[i]));
    acc += weights[i] / (z - atoms[i]);
  }
  return acc;
}

inline double cauchy_eval(const AtomicMeasure& mu, double x) { return cauchy_eval(mu, complex(x, 0.0)).real(); }

/// Regular part of the K-function at a real point: value R(w) = K(w) - 1/w
/// and its derivative R'(w).
struct RValue {
  double value = 0.0;
  double derivative = 0.0;
};

namespace detail {

// For w > 0 the branch point x = K(w) > t_max solves G(x) = w. Writing
// x = 1/w + y turns this into
//   h(y) = sum_i w_i s_i / (1 + w s_i) = 0,  s_i = y - t_i,
// which is increasing and concave on (t_max - 1/w, t_max] with h(t_max) >= 0.
// Solving for y directly keeps R accurate when R << 1/w. `sign` = -1 runs the
// same equation on the reflected atoms.
inline RValue solve_regular_part(const AtomicMeasure& mu, double w, double sign) {
  const auto atoms = mu.atoms();
  const auto weights = mu.weights();
  const std::size_t n = atoms.size();
  auto atom = [&](std::size_t i) { return sign * atoms[i]; };
  const double top = sign > 0 ? atoms[n - 1] : -atoms[0];

  auto eval = [&](double y, double& h, double& dh) {
    h = 0.0;
    dh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = y - atom(i);
      const double denom = 1.0 + w * s;
      h += weights[i] * s / denom;
      dh += weights[i] / (denom * denom);
    }
  };

  double lo = top - 1.0 / w;
  double hi = top;
  double h = 0.0;
  double dh = 0.0;
  eval(hi, h, dh);
  double y = hi;
  if (h != 0.0) {
    // Start from the second-order expansion y ~ m_1 + w (m_2 - m_1^2), clipped
    // into the bracket.
    double m1 = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m1 += weights[i] * atom(i);
      m2 += weights[i] * atom(i) * atom(i);
    }
    y = m1 + w * (m2 - m1 * m1);
    if (!(y > lo && y < hi)) y = 0.5 * (lo + hi);

    constexpr double eps = std::numeric_limits<double>::epsilon();
    bool converged = false;
    for (int iter = 0; iter < 200; ++iter) {
      eval(y, h, dh);
      if (h == 0.0) {
        converged = true;
        break;
      }
      if (h < 0.0) lo = y;
      else hi = y;
      double next = y - h / dh;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      const double step = std::abs(next - y);
      y = next;
      if (step <= 4.0 * eps * std::abs(y) || hi - lo <= 4.0 * eps * std::max(std::abs(lo), std::abs(hi))) {
        converged = true;
        break;
      }
    }
    if (!converged) throw NumericError("K-function root bracket failed to converge", std::abs(h));
    eval(y, h, dh);
  }

  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = y - atom(i);
    const double d2 = (1.0 + w * s) * (1.0 + w * s);
    num += weights[i] * s * s / d2;
    den += weights[i] / d2;
  }
  return {sign * y, num / den};
}

}  // namespace detail

/// R(w) = K(w) - 1/w for real w != 0, with derivative.
inline RValue r_eval(const AtomicMeasure& mu, double w) {
  if (!(w != 0.0) || !std::isfinite(w)) throw ValidationError("K-function argument must be finite and nonzero");
  return w > 0.0 ? detail::solve_regular_part(mu, w, 1.0) : detail::solve_regular_part(mu, -w, -1.0);
}

/// K(w) for w > 0: the unique x > max atom with G(x) = w.
inline double k_eval(const AtomicMeasure& mu, double w) {
  if (!(w > 0.0)) throw ValidationError("k_eval needs w > 0; use k_eval_left for negative arguments");
  return 1.0 / w + r_eval(mu, w).value;
}

/// K(w) for w < 0: the unique x < min atom with G(x) = w, i.e.
/// -k_eval(reflect(mu), -w).
inline double k_eval_left(const AtomicMeasure& mu, double w) {
  if (!(w < 0.0)) throw ValidationError("k_eval_left needs w < 0");
  return 1.0 / w + r_eval(mu, w).value;
}

/// K'(w) for real w != 0.
inline double k_derivative(const AtomicMeasure& mu, double w) { return -1.0 / (w * w) + r_eval(mu, w).derivative; }

/// Callable K-function of one atomic measure on the real line minus 0.
class KEvaluator {
 public:
  explicit KEvaluator(AtomicMeasure mu) : mu_(std::move(mu)) {}

  [[nodiscard]] double operator()(double w) const { return 1.0 / w + r_eval(mu_, w).value; }
  [[nodiscard]] double derivative(double w) const { return k_derivative(mu_, w); }
  [[nodiscard]] const AtomicMeasure& measure() const noexcept { return mu_; }

 private:
  AtomicMeasure mu_;
};

/// Semicircle density with variance a2.
inline double semicircle_density(double a2, double x) {
  if (!(a2 > 0.0)) throw ValidationError("semicircle variance must be positive");
  const double r2 = 4.0 * a2 - x * x;
  if (r2 <= 0.0) return 0.0;
  return std::sqrt(r2) / (2.0 * std::numbers::pi * a2);
}

enum class PointQuality { ok, unconverged, near_atom, solver_failed };

inline const char* to_string(PointQuality q) {
  switch (q) {
    case PointQuality::ok: return "ok";
    case PointQuality::unconverged: return "unconverged";
    case PointQuality::near_atom: return "near_atom";
    case PointQuality::solver_failed: return "solver_failed";
  }
  return "unknown";
}

inline PointQuality point_quality_from_string(const std::string& s) {
  if (s == "ok") return PointQuality::ok;
  if (s == "unconverged") return PointQuality::unconverged;
  if (s == "near_atom") return PointQuality::near_atom;
  if (s == "solver_failed") return PointQuality::solver_failed;
  throw ValidationError("unknown point quality '" + s + "'");
}

/// Density samples phi(x) recovered from G(x + i eps).
struct DensityGrid {
  std::vector<double> xs;
  std::vector<double> epsilons;  ///< the eps sequence used, decreasing
  std::vector<double> values;
  std::vector<PointQuality> quality;

  /// Trapezoid mass over the grid.
  [[nodiscard]] double mass() const {
    double acc = 0.0;
    for (std::size_t i = 1; i < xs.size(); ++i) acc += 0.5 * (values[i] + values[i - 1]) * (xs[i] - xs[i - 1]);
    return acc;
  }

  /// Linear interpolation, zero outside the grid.
  [[nodiscard]] double at(double x) const {
    if (xs.empty() || x < xs.front() || x > xs.back()) return 0.0;
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    if (it == xs.end()) return values.back();
    const std::size_t i = static_cast<std::size_t>(it - xs.begin());
    const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
    return (1.0 - t) * values[i - 1] + t * values[i];
  }
};

struct StieltjesOptions {
  double quality_tolerance = 1e-3;  ///< allowed disagreement between the two extrapolations
};

namespace detail {

inline void check_eps_sequence(const std::vector<double>& eps) {
  if (eps.size() < 2) throw ValidationError("need at least two eps values for extrapolation");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0.0)) throw ValidationError("eps values must be positive");
    if (i > 0 && !(eps[i] < eps[i - 1])) throw ValidationError("eps values must be strictly decreasing");
  }
}

// phi_j = -Im G(x + i eps_j) / pi is smooth in eps off atoms; eliminate the
// linear term with the two smallest eps. With three or more eps the two
// largest give a second estimate used only as a quality check.
inline std::pair<double, PointQuality> extrapolate_density(const std::vector<double>& eps,
                                                          const std::vector<double>& phi, double tol) {
  const std::size_t n = eps.size();
  auto richardson = [&](std::size_t a, std::size_t b) {
    return (eps[a] * phi[b] - eps[b] * phi[a]) / (eps[a] - eps[b]);
  };
  const double est = richardson(n - 2, n - 1);
  PointQuality q = PointQuality::ok;
  if (!std::isfinite(est)) return {0.0, PointQuality::solver_failed};
  if (n >= 3) {
    const double alt = richardson(0, 1);
    if (std::abs(alt - est) > tol * std::max(1.0, std::abs(est))) q = PointQuality::unconverged;
  }
  return {std::max(est, 0.0), q};
}

}  // namespace detail

/// Density phi(x) = -(1/pi) lim Im g_eval(x + i eps), limit by two-point
/// Richardson extrapolation in eps. Negative results are clamped to 0.
inline DensityGrid stieltjes_density(const std::function<complex(complex)>& g_eval, const std::vector<double>& xs,
                                     const std::vector<double>& eps_sequence, const StieltjesOptions& opt = {}) {
  detail::check_eps_sequence(eps_sequence);
  DensityGrid grid;
  grid.xs = xs;
  grid.epsilons = eps_sequence;
  grid.values.resize(xs.size());
  grid.quality.resize(xs.size());
  std::vector<double> phi(eps_sequence.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < eps_sequence.size(); ++j)
      phi[j] = -g_eval(complex(xs[i], eps_sequence[j])).imag() / std::numbers::pi;
    std::tie(grid.values[i], grid.quality[i]) =
        detail::extrapolate_density(eps_sequence, phi, opt.quality_tolerance);
  }
  return grid;
}

/// Uniform grid of `points` values over [lo, hi].
inline std::vector<double> linear_grid(double lo, double hi, std::size_t points) {
  if (points < 2 || !(hi > lo)) throw ValidationError("grid needs at least two points and hi > lo");
  std::vector<double> xs(points);
  for (std::size_t i = 0; i < points; ++i)
    xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return xs;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// CSV with header x,phi,quality and 17 significant digits.
inline void write_density_csv(std::ostream& os, const DensityGrid& grid) {
  os << "x,phi,quality\n";
  for (std::size_t i = 0; i < grid.xs.size(); ++i)
    os << format_double(grid.xs[i]) << ',' << format_double(grid.values[i]) << ',' << to_string(grid.quality[i])
       << '\n';
}

inline DensityGrid read_density_csv(std::istream& is) {
  DensityGrid grid;
  std::string line;
  if (!std::getline(is, line) || line != "x,phi,quality") throw ValidationError("density CSV header mismatch");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string x, phi, q;
    if (!std::getline(row, x, ',') || !std::getline(row, phi, ',') || !std::getline(row, q))
      throw ValidationError("malformed density CSV row: " + line);
    grid.xs.push_back(std::stod(x));
    grid.values.push_back(std::stod(phi));
    grid.quality.push_back(point_quality_from_string(q));
  }
  return grid;
}

}  // namespace freeprob
