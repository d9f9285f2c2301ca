#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "cops/theory/divergence.hpp"

using namespace cops::theory;

TEST_CASE("total variation distance") {
  CHECK(tv_distance({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  CHECK(tv_distance({1.0, 0.0}, {0.0, 1.0}) == 1.0);
  CHECK(tv_distance({0.5, 0.5}, {1.0, 0.0}) == Catch::Approx(0.5).margin(1e-12));
  CHECK(tv_distance({0.3, 0.7}, {0.7, 0.3}) == tv_distance({0.7, 0.3}, {0.3, 0.7}));
  CHECK_THROWS_AS(tv_distance({0.5, 0.6}, {0.5, 0.5}), cops::Error);
  CHECK_THROWS_AS(tv_distance({0.5, 0.5}, {0.5}), cops::Error);
}

TEST_CASE("hellinger distance") {
  CHECK(hellinger({0.25, 0.75}, {0.25, 0.75}) == 0.0);
  CHECK(hellinger({1.0, 0.0}, {0.0, 1.0}) == Catch::Approx(1.0).margin(1e-12));
  // sqrt(1 - sqrt(1/2)) for (.5,.5) vs (1,0)
  CHECK(hellinger({0.5, 0.5}, {1.0, 0.0}) ==
        Catch::Approx(std::sqrt(1.0 - std::sqrt(0.5))).margin(1e-12));
  CHECK(hellinger({0.5, 0.5}, {1.0, 0.0}) == Catch::Approx(0.5412).margin(5e-5));
}

TEST_CASE("chi-square distance") {
  CHECK(chi_square({0.4, 0.6}, {0.4, 0.6}) == Catch::Approx(0.0).margin(1e-12));
  CHECK(chi_square({0.5, 0.5}, {0.75, 0.25}) == Catch::Approx(1.0 / 3.0).margin(1e-12));
  CHECK(std::isinf(chi_square({1.0, 0.0}, {0.0, 1.0})));
  CHECK_THROWS_AS(chi_square({0.5, 0.4}, {0.5, 0.5}), cops::Error);
}

TEST_CASE("identity: 1 + chi2 equals sum p^2/q") {
  Dist p{0.2, 0.3, 0.5};
  Dist q{0.25, 0.25, 0.5};
  double direct = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) direct += p[i] * p[i] / q[i];
  CHECK(1.0 + chi_square(p, q) == Catch::Approx(direct).margin(1e-12));
}

TEST_CASE("divergences vanish exactly when distributions match") {
  cops::Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Dist p = normalized({0.1 + cops::uniform_double(rng), 0.1 + cops::uniform_double(rng),
                         0.1 + cops::uniform_double(rng)});
    CHECK(tv_distance(p, p) == 0.0);
    CHECK(hellinger(p, p) == 0.0);
    CHECK(chi_square(p, p) == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("sandwich D_H^2 <= D_TV <= sqrt(2) D_H on random pairs") {
  cops::Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 2 + rng() % 5;
    Dist p(n), q(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = 0.01 + cops::uniform_double(rng);
      q[i] = 0.01 + cops::uniform_double(rng);
    }
    p = normalized(std::move(p));
    q = normalized(std::move(q));
    double tv = tv_distance(p, q);
    double h = hellinger(p, q);
    CHECK(h * h <= tv + 1e-12);
    CHECK(tv <= std::sqrt(2.0) * h + 1e-12);
  }
}

TEST_CASE("the one-sided TV <= Hellinger claim fails on a counterexample") {
  // The valid sandwich above is what the bound verifiers rely on; this pair
  // shows D_TV > D_H, so the unscaled step cannot be asserted in general.
  Dist p{1.0, 0.0};
  Dist q{0.25, 0.75};
  double tv = tv_distance(p, q);   // 0.75
  double h = hellinger(p, q);      // sqrt(1 - 0.5) ~ 0.7071
  CHECK(tv == Catch::Approx(0.75).margin(1e-12));
  CHECK(h == Catch::Approx(std::sqrt(0.5)).margin(1e-12));
  CHECK(tv > h);
}
