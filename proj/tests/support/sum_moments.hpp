#pragma once

#include <complex>
#include <numbers>
#include <vector>

#include "freeprob/freeconv.hpp"

namespace freeprob::testing {

// Moments of the sum from its Cauchy transform: m_n = (1/2 pi i) \oint z^n G(z) dz
// on a circle enclosing the support, using G(conj z) = conj G(z).
inline std::vector<double> contour_moments(const RowSpec& row, double radius, std::size_t order,
                                           std::size_t nodes = 256) {
  std::vector<double> m(order, 0.0);
  for (std::size_t j = 0; j < nodes / 2; ++j) {
    const double th = std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(nodes / 2);
    const std::complex<double> z = std::polar(radius, th);
    const std::complex<double> g = convolution_cauchy(row, z);
    std::complex<double> zn = z;
    for (std::size_t n = 1; n <= order; ++n) {
      zn *= z;
      // Upper and lower half contribute conjugate terms of z^{n+1} G / (i z) * i.
      m[n - 1] += 2.0 * (zn * g).real();
    }
  }
  for (double& v : m) v /= static_cast<double>(nodes);
  return m;
}

}  // namespace freeprob::testing
