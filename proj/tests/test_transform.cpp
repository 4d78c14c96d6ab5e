#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "freeprob/series.hpp"
#include "freeprob/transform.hpp"
#include "support/reference_laws.hpp"

using namespace freeprob;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("Cauchy transform of a coin", "[transform]") {
  const auto coin = AtomicMeasure::symmetric_coin(1.0);
  const complex z(0.3, 0.7);
  const complex expected = z / (z * z - 1.0);
  CHECK(std::abs(cauchy_eval(coin, z) - expected) < 1e-15);
  CHECK_THAT(cauchy_eval(coin, 2.0), WithinAbs(2.0 / 3.0, 1e-15));
  CHECK_THROWS_AS(cauchy_eval(coin, 1.0), ValidationError);
}

TEST_CASE("K of the coin matches the closed form", "[transform]") {
  const auto coin = AtomicMeasure::symmetric_coin(1.0);
  for (double w : {1e-6, 1e-3, 0.1, 0.5, 1.0, 3.0, 100.0, 1e6}) {
    CHECK_THAT(k_eval(coin, w), WithinRel(testing::coin_k(w), 1e-14));
    CHECK_THAT(k_eval_left(coin, -w), WithinRel(-testing::coin_k(w), 1e-14));
  }
  CHECK_THROWS_AS(k_eval(coin, -1.0), ValidationError);
  CHECK_THROWS_AS(k_eval_left(coin, 1.0), ValidationError);
  CHECK_THROWS_AS(r_eval(coin, 0.0), ValidationError);
}

TEST_CASE("K is a right inverse of G on both sides", "[transform][property]") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> logw(-4.0, 4.0);
  for (int trial = 0; trial < 40; ++trial) {
    const auto mu = testing::random_measure(rng, 2.0);
    for (int j = 0; j < 10; ++j) {
      const double w = std::pow(10.0, logw(rng));
      const double x = k_eval(mu, w);
      CHECK(x > mu.max_atom());
      CHECK_THAT(cauchy_eval(mu, x), WithinRel(w, 1e-10));
      const double xl = k_eval_left(mu, -w);
      CHECK(xl < mu.min_atom());
      CHECK_THAT(cauchy_eval(mu, xl), WithinRel(-w, 1e-10));
    }
  }
}

TEST_CASE("K derivative matches a difference quotient", "[transform][property]") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mu = testing::random_measure(rng, 1.0);
    const KEvaluator k(mu);
    for (double w : {0.05, 0.3, 1.0, 4.0, -0.2, -2.0}) {
      const double h = 1e-5 * std::abs(w);
      const double fd = (r_eval(mu, w + h).value - r_eval(mu, w - h).value) / (2.0 * h) - 1.0 / (w * w);
      CHECK_THAT(k.derivative(w), WithinAbs(fd, 1e-7 * std::max(1.0, std::abs(fd))));
    }
  }
}

TEST_CASE("regular part of K matches the cumulant series near zero", "[transform][property]") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mu = testing::random_measure(rng, 1.0);
    const auto ks = k_from_g_formal(g_from_moments(moments(mu, 14)));
    const double w = 0.02;
    CHECK_THAT(r_eval(mu, w).value, WithinAbs(ks.r_value(w), 1e-13));
    CHECK_THAT(r_eval(mu, -w).value, WithinAbs(ks.r_value(-w), 1e-13));
  }
}

TEST_CASE("K of a point mass", "[transform]") {
  const auto d = AtomicMeasure::point_mass(1.5);
  CHECK_THAT(k_eval(d, 0.25), WithinAbs(4.0 + 1.5, 1e-14));
  CHECK(r_eval(d, 3.0).derivative == 0.0);
}

TEST_CASE("dilation identity for K", "[transform][property]") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mu = testing::random_measure(rng, 1.0);
    for (double a : {0.5, 2.0, -1.5}) {
      const double w = 0.7;
      const double lhs = a > 0 ? k_eval(dilate(mu, a), w) : k_eval(dilate(mu, a), w);
      const double rhs = a * (a * w > 0 ? k_eval(mu, a * w) : k_eval_left(mu, a * w));
      CHECK_THAT(lhs, WithinRel(rhs, 1e-13));
    }
  }
}

TEST_CASE("semicircle density", "[transform]") {
  CHECK_THAT(semicircle_density(1.0, 0.0), WithinAbs(1.0 / std::numbers::pi, 1e-15));
  CHECK(semicircle_density(1.0, 2.5) == 0.0);
  CHECK_THROWS_AS(semicircle_density(0.0, 0.0), ValidationError);
}

TEST_CASE("Stieltjes inversion of closed-form transforms", "[transform]") {
  const auto xs = linear_grid(-2.5, 2.5, 101);
  const std::vector<double> eps{1e-3, 5e-4, 2.5e-4};
  const auto sc = stieltjes_density([](complex z) { return testing::semicircle_cauchy(1.0, z); }, xs, eps);
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (std::abs(std::abs(xs[i]) - 2.0) > 0.05) CHECK_THAT(sc.values[i], WithinAbs(semicircle_density(1.0, xs[i]), 1e-6));
  CHECK_THAT(sc.mass(), WithinAbs(1.0, 5e-3));

  const auto arc = stieltjes_density(testing::arcsine_cauchy, {0.0, 1.0, 3.0}, eps);
  CHECK_THAT(arc.values[0], WithinAbs(testing::arcsine_density(0.0), 1e-8));
  CHECK_THAT(arc.values[1], WithinAbs(testing::arcsine_density(1.0), 1e-8));
  CHECK_THAT(arc.values[2], WithinAbs(0.0, 1e-8));
}

TEST_CASE("epsilon sequences are validated", "[transform]") {
  auto g = [](complex z) { return 1.0 / z; };
  CHECK_THROWS_AS(stieltjes_density(g, {0.0}, {1e-3}), ValidationError);
  CHECK_THROWS_AS(stieltjes_density(g, {0.0}, {1e-3, 1e-3}), ValidationError);
  CHECK_THROWS_AS(stieltjes_density(g, {0.0}, {1e-3, -1e-4}), ValidationError);
  CHECK_THROWS_AS(linear_grid(1.0, 0.0, 5), ValidationError);
}

TEST_CASE("density CSV round trip is lossless", "[transform]") {
  DensityGrid g;
  g.xs = {-1.0 / 3.0, 0.1, std::nextafter(1.0, 2.0)};
  g.values = {0.123456789012345678, 1e-300, 0.0};
  g.quality = {PointQuality::ok, PointQuality::near_atom, PointQuality::unconverged};
  std::stringstream ss;
  write_density_csv(ss, g);
  const auto back = read_density_csv(ss);
  CHECK(back.xs == g.xs);
  CHECK(back.values == g.values);
  CHECK(back.quality == g.quality);
  std::stringstream bad("x,y\n");
  CHECK_THROWS_AS(read_density_csv(bad), ValidationError);
  CHECK_THROWS_AS(point_quality_from_string("great"), ValidationError);
}
