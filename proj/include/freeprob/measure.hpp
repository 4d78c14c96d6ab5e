#pragma once

// Compactly supported probability measures stored as weighted atoms.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "freeprob/errors.hpp"

namespace freeprob {

/// Moments m_1..m_order of a measure. values[k-1] holds m_k.
struct MomentVector {
  std::vector<double> values;

  [[nodiscard]] std::size_t order() const noexcept { return values.size(); }
  /// 1-based access, m(0) == 1.
  [[nodiscard]] double m(std::size_t k) const { return k == 0 ? 1.0 : values.at(k - 1); }
};

/// A probability measure with finitely many atoms.
///
/// Construction canonicalizes the input: atoms are sorted, atoms closer than
/// kMergeTolerance * L are merged (weight-averaged position), and weights that
/// sum to 1 within kWeightTolerance are renormalized. Anything else throws
/// ValidationError. Immutable afterwards.
class AtomicMeasure {
 public:
  static constexpr double kWeightTolerance = 1e-12;
  static constexpr double kMergeTolerance = 1e-12;

  AtomicMeasure(std::vector<double> atoms, std::vector<double> weights) {
    if (atoms.empty()) throw ValidationError("measure needs at least one atom");
    if (atoms.size() != weights.size())
      throw ValidationError("atoms and weights differ in length (" + std::to_string(atoms.size()) +
                            " vs " + std::to_string(weights.size()) + ")");
    double total = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      if (!std::isfinite(atoms[i])) throw ValidationError("atom " + std::to_string(i) + " is not finite");
      if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
        throw ValidationError("weight " + std::to_string(i) + " must be positive and finite");
      total += weights[i];
    }
    if (std::abs(total - 1.0) > kWeightTolerance)
      throw ValidationError("weights sum to " + std::to_string(total) + ", expected 1");

    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return atoms[a] < atoms[b]; });

    double norm = 0.0;
    for (double t : atoms) norm = std::max(norm, std::abs(t));
    const double merge = kMergeTolerance * norm;

    for (std::size_t idx : order) {
      const double t = atoms[idx];
      const double w = weights[idx] / total;
      if (!atoms_.empty() && t - atoms_.back() <= merge) {
        const double w0 = weights_.back();
        atoms_.back() = (atoms_.back() * w0 + t * w) / (w0 + w);
        weights_.back() = w0 + w;
      } else {
        atoms_.push_back(t);
        weights_.push_back(w);
      }
    }
  }

  static AtomicMeasure point_mass(double at) { return AtomicMeasure({at}, {1.0}); }

  /// Symmetric coin a*(+-1) with equal weights.
  static AtomicMeasure symmetric_coin(double a = 1.0) {
    if (a == 0.0) return point_mass(0.0);
    return AtomicMeasure({-std::abs(a), std::abs(a)}, {0.5, 0.5});
  }

  /// Two-point law with weight p at -sqrt(q/p) and q = 1 - p at sqrt(p/q):
  /// mean zero, variance one.
  static AtomicMeasure standardized_binomial(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("binomial weight p must lie in (0, 1)");
    const double q = 1.0 - p;
    return AtomicMeasure({-std::sqrt(q / p), std::sqrt(p / q)}, {p, q});
  }

  [[nodiscard]] std::span<const double> atoms() const noexcept { return atoms_; }
  [[nodiscard]] std::span<const double> weights() const noexcept { return weights_; }
  [[nodiscard]] std::size_t size() const noexcept { return atoms_.size(); }
  [[nodiscard]] double min_atom() const noexcept { return atoms_.front(); }
  [[nodiscard]] double max_atom() const noexcept { return atoms_.back(); }

  /// Norm bound L = max |atom|.
  [[nodiscard]] double norm_bound() const noexcept {
    return std::max(std::abs(atoms_.front()), std::abs(atoms_.back()));
  }

  [[nodiscard]] bool is_point_mass() const noexcept { return atoms_.size() == 1; }

  friend bool operator==(const AtomicMeasure&, const AtomicMeasure&) = default;

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
};

inline MomentVector moments(const AtomicMeasure& mu, std::size_t order) {
  if (order == 0) throw ValidationError("moment order must be at least 1");
  MomentVector out{std::vector<double>(order, 0.0)};
  const auto atoms = mu.atoms();
  const auto weights = mu.weights();
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    double power = weights[i];
    for (std::size_t k = 0; k < order; ++k) {
      power *= atoms[i];
      out.values[k] += power;
    }
  }
  return out;
}

inline double mean(const AtomicMeasure& mu) { return moments(mu, 1).values[0]; }

inline double variance(const AtomicMeasure& mu) {
  const double m1 = mean(mu);
  double v = 0.0;
  const auto atoms = mu.atoms();
  const auto weights = mu.weights();
  for (std::size_t i = 0; i < atoms.size(); ++i) v += weights[i] * (atoms[i] - m1) * (atoms[i] - m1);
  return v;
}

/// Shift atoms so the first moment vanishes.
inline AtomicMeasure center(const AtomicMeasure& mu) {
  const double m1 = mean(mu);
  std::vector<double> atoms(mu.atoms().begin(), mu.atoms().end());
  for (double& t : atoms) t -= m1;
  return {std::move(atoms), std::vector<double>(mu.weights().begin(), mu.weights().end())};
}

/// Law of alpha * X. alpha == 0 is rejected; ask for point_mass(0) instead.
inline AtomicMeasure dilate(const AtomicMeasure& mu, double alpha) {
  if (alpha == 0.0 || !std::isfinite(alpha))
    throw ValidationError("dilation factor must be finite and nonzero");
  std::vector<double> atoms(mu.atoms().begin(), mu.atoms().end());
  for (double& t : atoms) t *= alpha;
  return {std::move(atoms), std::vector<double>(mu.weights().begin(), mu.weights().end())};
}

/// Law of -X.
inline AtomicMeasure reflect(const AtomicMeasure& mu) { return dilate(mu, -1.0); }

}  // namespace freeprob
