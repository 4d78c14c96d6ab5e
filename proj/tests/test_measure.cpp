#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "freeprob/measure.hpp"
#include "support/reference_laws.hpp"

using namespace freeprob;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("measure construction validates input", "[measure]") {
  CHECK_THROWS_AS(AtomicMeasure({}, {}), ValidationError);
  CHECK_THROWS_AS(AtomicMeasure({0.0, 1.0}, {1.0}), ValidationError);
  CHECK_THROWS_AS(AtomicMeasure({0.0, 1.0}, {0.5, 0.6}), ValidationError);
  CHECK_THROWS_AS(AtomicMeasure({0.0, 1.0}, {1.0, 0.0}), ValidationError);
  CHECK_THROWS_AS(AtomicMeasure({0.0, 1.0}, {1.5, -0.5}), ValidationError);
  CHECK_THROWS_AS(AtomicMeasure({NAN, 1.0}, {0.5, 0.5}), ValidationError);
  CHECK_THROWS_AS(AtomicMeasure({INFINITY}, {1.0}), ValidationError);
}

TEST_CASE("weights within tolerance of one are renormalized", "[measure]") {
  const AtomicMeasure mu({-1.0, 1.0}, {0.5 + 4e-13, 0.5});
  double total = 0.0;
  for (double w : mu.weights()) total += w;
  CHECK_THAT(total, WithinAbs(1.0, 1e-15));
}

TEST_CASE("atoms are sorted and near-duplicates merged", "[measure]") {
  const AtomicMeasure mu({1.0, -1.0, 1.0 + 1e-14, 0.0}, {0.25, 0.25, 0.25, 0.25});
  REQUIRE(mu.size() == 3);
  CHECK(mu.atoms()[0] == -1.0);
  CHECK(mu.atoms()[1] == 0.0);
  CHECK_THAT(mu.atoms()[2], WithinAbs(1.0, 1e-13));
  CHECK_THAT(mu.weights()[2], WithinAbs(0.5, 1e-15));
  CHECK(mu.min_atom() == -1.0);
  CHECK_THAT(mu.norm_bound(), WithinAbs(1.0, 1e-13));
}

TEST_CASE("merge tolerance is relative to the largest atom", "[measure]") {
  const double a = std::ldexp(1.0, -13);
  const AtomicMeasure mu({-a, a}, {0.5, 0.5});
  CHECK(mu.size() == 2);
}

TEST_CASE("moments of simple laws", "[measure]") {
  const auto m = moments(AtomicMeasure::symmetric_coin(1.0), 6);
  CHECK(m.values == std::vector<double>{0, 1, 0, 1, 0, 1});
  CHECK(m.m(0) == 1.0);
  CHECK_THROWS_AS(moments(AtomicMeasure::point_mass(0.0), 0), ValidationError);

  const auto p = moments(AtomicMeasure::point_mass(2.0), 3);
  CHECK(p.values == std::vector<double>{2, 4, 8});
}

TEST_CASE("standardized binomial has mean 0 and variance 1", "[measure]") {
  for (double p : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    const auto mu = AtomicMeasure::standardized_binomial(p);
    CHECK_THAT(mean(mu), WithinAbs(0.0, 1e-15));
    CHECK_THAT(variance(mu), WithinRel(1.0, 1e-14));
    CHECK_THAT(mu.weights()[0], WithinAbs(p, 1e-15));
    CHECK(mu.atoms()[0] < 0.0);
  }
  CHECK_THROWS_AS(AtomicMeasure::standardized_binomial(0.0), ValidationError);
  CHECK_THROWS_AS(AtomicMeasure::standardized_binomial(1.0), ValidationError);
}

TEST_CASE("center, dilate and reflect", "[measure]") {
  const AtomicMeasure mu({0.0, 1.0}, {0.75, 0.25});
  const auto c = center(mu);
  CHECK_THAT(mean(c), WithinAbs(0.0, 1e-16));
  CHECK_THAT(variance(c), WithinRel(variance(mu), 1e-14));

  const auto d = dilate(mu, -2.0);
  CHECK(d.atoms()[0] == -2.0);
  CHECK(d.atoms()[1] == 0.0);
  CHECK(d.weights()[0] == 0.25);
  CHECK_THROWS_AS(dilate(mu, 0.0), ValidationError);
  CHECK_THROWS_AS(dilate(mu, INFINITY), ValidationError);
  CHECK(reflect(reflect(mu)) == mu);
}

TEST_CASE("moment scaling under dilation (random measures)", "[measure][property]") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> alpha(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto mu = testing::random_measure(rng);
    const double a = alpha(rng);
    if (std::abs(a) < 1e-3) continue;
    const auto m = moments(mu, 6);
    const auto md = moments(dilate(mu, a), 6);
    for (std::size_t k = 1; k <= 6; ++k) CHECK_THAT(md.m(k), WithinAbs(std::pow(a, k) * m.m(k), 1e-12 * std::pow(std::abs(a) + 1, k)));
  }
}
