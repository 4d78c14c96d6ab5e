#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <random>

#include "freeprob/series.hpp"
#include "support/reference_laws.hpp"

using namespace freeprob;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}
double catalan(int n) { return binomial(2 * n, n) / (n + 1); }
double narayana(int n, int k) { return binomial(n, k) * binomial(n, k - 1) / n; }

}  // namespace

TEST_CASE("series arithmetic truncates at the left order", "[series]") {
  const TruncatedSeries a({1.0, 2.0, 3.0});
  const TruncatedSeries b({0.0, 1.0, 1.0, 1.0});
  const auto p = a * b;
  CHECK(p.order() == 2);
  CHECK(p[0] == 0.0);
  CHECK(p[1] == 1.0);
  CHECK(p[2] == 3.0);
  CHECK((a + b)[2] == 4.0);
  CHECK((a - b)[1] == 1.0);
  CHECK((a * 2.0)[2] == 6.0);
  CHECK(a[10] == 0.0);
  CHECK_THROWS_AS(TruncatedSeries(std::vector<double>{}), ValidationError);
}

TEST_CASE("reciprocal of 1 - x is the geometric series", "[series]") {
  const auto r = reciprocal(TruncatedSeries({1.0, -1.0, 0.0, 0.0, 0.0, 0.0}));
  for (std::size_t k = 0; k <= 5; ++k) CHECK(r[k] == 1.0);
  CHECK_THROWS_AS(reciprocal(TruncatedSeries({0.0, 1.0})), ValidationError);
}

TEST_CASE("composition and reversion", "[series]") {
  // exp(x) - 1 composed with log(1 + x) is x.
  const std::size_t n = 10;
  TruncatedSeries e(n);
  TruncatedSeries l(n);
  double fact = 1.0;
  for (std::size_t k = 1; k <= n; ++k) {
    fact *= static_cast<double>(k);
    e.at(k) = 1.0 / fact;
    l.at(k) = ((k % 2) ? 1.0 : -1.0) / static_cast<double>(k);
  }
  const auto id = compose(e, l);
  for (std::size_t k = 0; k <= n; ++k) CHECK_THAT(id[k], WithinAbs(k == 1 ? 1.0 : 0.0, 1e-14));
  const auto inv = reversion(e);
  for (std::size_t k = 1; k <= n; ++k) CHECK_THAT(inv[k], WithinAbs(l[k], 1e-13));

  // The reversion of x - x^2 generates the Catalan numbers.
  const auto c = reversion(TruncatedSeries({0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0}));
  for (int k = 1; k <= 7; ++k) CHECK_THAT(c[static_cast<std::size_t>(k)], WithinAbs(catalan(k - 1), 1e-12));
  CHECK_THROWS_AS(reversion(TruncatedSeries({1.0, 1.0})), ValidationError);
  CHECK_THROWS_AS(compose(e, TruncatedSeries({1.0, 1.0})), ValidationError);
}

TEST_CASE("non-crossing partition counts", "[series][nc]") {
  for (int n = 1; n <= 10; ++n) {
    const auto& table = detail::nc_signatures(static_cast<std::size_t>(n));
    double total = 0.0;
    std::vector<double> by_blocks(static_cast<std::size_t>(n) + 1, 0.0);
    for (const auto& [sizes, count] : table) {
      total += static_cast<double>(count);
      by_blocks[sizes.size()] += static_cast<double>(count);
      CHECK(std::accumulate(sizes.begin(), sizes.end(), 0) == n);
    }
    CHECK(total == catalan(n));
    for (int k = 1; k <= n; ++k) CHECK(by_blocks[static_cast<std::size_t>(k)] == narayana(n, k));
  }
}

TEST_CASE("crossing detection", "[series][nc]") {
  CHECK(detail::nc::is_non_crossing({0, 1, 1, 0}, 2));
  CHECK_FALSE(detail::nc::is_non_crossing({0, 1, 0, 1}, 2));
  CHECK(detail::nc::is_non_crossing({0, 1, 0, 2}, 3));
  CHECK_FALSE(detail::nc::is_non_crossing({0, 1, 2, 0, 1}, 3));
}

TEST_CASE("semicircle and free Poisson cumulants from moments", "[series][nc]") {
  // Semicircle of variance 1: moments are Catalan numbers at even orders.
  MomentVector sc{std::vector<double>(10, 0.0)};
  for (int k = 2; k <= 10; k += 2) sc.values[static_cast<std::size_t>(k) - 1] = catalan(k / 2);
  const auto ks = cumulants_from_moments_nc(sc);
  for (std::size_t k = 1; k <= 10; ++k) CHECK_THAT(ks[k - 1], WithinAbs(k == 2 ? 1.0 : 0.0, 1e-12));
  const auto kf = k_from_g_formal(g_from_moments(sc));
  for (std::size_t k = 1; k <= 10; ++k) CHECK_THAT(kf.cumulant(k), WithinAbs(k == 2 ? 1.0 : 0.0, 1e-12));

  // Free Poisson with rate 2: moments are sum_k Narayana(n, k) 2^k, cumulants all 2.
  MomentVector fp{std::vector<double>(9, 0.0)};
  for (int n = 1; n <= 9; ++n)
    for (int k = 1; k <= n; ++k) fp.values[static_cast<std::size_t>(n) - 1] += narayana(n, k) * std::pow(2.0, k);
  for (double c : cumulants_from_moments_nc(fp)) CHECK_THAT(c, WithinRel(2.0, 1e-12));
  for (double c : k_from_g_formal(g_from_moments(fp)).kappa) CHECK_THAT(c, WithinRel(2.0, 1e-12));
  const auto back = moments_from_cumulants_nc(std::vector<double>(9, 2.0));
  for (std::size_t k = 0; k < 9; ++k) CHECK_THAT(back.values[k], WithinRel(fp.values[k], 1e-14));
}

TEST_CASE("order limits of the partition oracle", "[series][nc]") {
  CHECK_THROWS_AS(cumulants_from_moments_nc(MomentVector{std::vector<double>(13, 0.0)}), ValidationError);
  CHECK_THROWS_AS(moments_from_cumulants_nc(std::vector<double>(13, 0.0)), ValidationError);
}

TEST_CASE("formal inversion agrees with the partition oracle", "[series][property]") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const auto mu = testing::random_measure(rng, 1.0);
    const auto m = moments(mu, 10);
    const auto kf = k_from_g_formal(g_from_moments(m));
    const auto kn = cumulants_from_moments_nc(m);
    for (std::size_t k = 1; k <= 10; ++k) CHECK_THAT(kf.cumulant(k), WithinAbs(kn[k - 1], 1e-10));
  }
}

TEST_CASE("g_from_k_formal inverts k_from_g_formal", "[series][property]") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mu = testing::random_measure(rng, 1.5);
    const auto g = g_from_moments(moments(mu, 12));
    const auto k = k_from_g_formal(g);
    const auto g2 = g_from_k_formal(k);
    REQUIRE(g2.order() == g.order());
    for (std::size_t j = 0; j <= g.order(); ++j) CHECK_THAT(g2.coeffs[j], WithinAbs(g.coeffs[j], 1e-9 * std::max(1.0, std::abs(g.coeffs[j]))));
    CHECK(formal_inverse_residual(g, k) < 1e-10);
  }
}

TEST_CASE("K-series evaluation", "[series]") {
  const KSeries k{{0.0, 1.0}};
  CHECK_THAT(k.value(0.5), WithinAbs(2.5, 1e-15));
  CHECK_THAT(k.derivative(0.5), WithinAbs(-3.0, 1e-15));
  CHECK_THAT(k.r_value(0.5), WithinAbs(0.5, 1e-15));
  CHECK(k.cumulant(2) == 1.0);
}

TEST_CASE("contour coefficients match formal inversion", "[series][contour]") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const auto mu = testing::random_measure(rng, 1.0);
    const auto inv = lagrange_inversion(mu, 8, default_contour_radius(mu));
    const auto kf = k_from_g_formal(g_from_moments(moments(mu, 9)));
    for (std::size_t k = 1; k <= 9; ++k)
      CHECK_THAT(inv.k.cumulant(k), WithinAbs(kf.cumulant(k), 1e-8 * std::max(1.0, std::abs(kf.cumulant(k)))));
    const double L = mu.norm_bound();
    const double R = 2.0 * L;
    const double m = 0.25 / L;
    for (std::size_t k = 1; k <= 8; ++k) CHECK(std::abs(inv.b[k - 1]) <= R / static_cast<double>(k) * std::pow(m, -static_cast<double>(k)));
  }
}

TEST_CASE("coin contour coefficients", "[series][contour]") {
  // K of the +-1 coin: 1/w + (sqrt(1 + 4w^2) - 1)/(2w) = 1/w + w - w^3 + 2 w^5 - 5 w^7 ...
  const auto k = lagrange_coeffs(AtomicMeasure::symmetric_coin(1.0), 8);
  const double expected[] = {0, 1, 0, -1, 0, 2, 0, -5, 0};
  for (std::size_t j = 1; j <= 9; ++j) CHECK_THAT(k.cumulant(j), WithinAbs(expected[j - 1], 1e-10));
}

TEST_CASE("contour radius is validated", "[series][contour]") {
  const auto mu = AtomicMeasure::symmetric_coin(2.0);
  CHECK_THROWS_AS(lagrange_inversion(mu, 4, 0.5), ValidationError);
  CHECK_THROWS_AS(lagrange_inversion(mu, 4, -0.1), ValidationError);
  CHECK_THROWS_AS(lagrange_inversion(mu, 0, 0.1), ValidationError);
  const auto zero = lagrange_coeffs(AtomicMeasure::point_mass(0.0), 4);
  for (double c : zero.kappa) CHECK_THAT(c, WithinAbs(0.0, 1e-14));
}
