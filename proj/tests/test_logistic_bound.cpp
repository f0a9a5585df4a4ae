#include <cmath>
#include <initializer_list>

#include "baldur/logistic_bound.hpp"
#include "doctest.h"

using namespace baldur;

TEST_CASE("lambda at 1 matches the closed form") {
  const double s = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(jaakkola_lambda(1.0) == doctest::Approx((s - 0.5) / 2.0).epsilon(1e-14));
  CHECK(jaakkola_lambda(1.0) == doctest::Approx(0.11552928).epsilon(1e-8));
}

TEST_CASE("lambda is even and tends to 1/8 at the origin") {
  for (double a : {0.5, 2.0, 7.0}) CHECK(jaakkola_lambda(-a) == jaakkola_lambda(a));
  CHECK(jaakkola_lambda(0.0) == 0.125);
  for (double a = -1e-3; a <= 1e-3; a += 1e-5) CHECK(std::abs(jaakkola_lambda(a) - 0.125) <= 1e-6);
}

TEST_CASE("lambda is positive and decreasing in |a|") {
  double prev = jaakkola_lambda(0.0);
  for (double a = 0.1; a < 40.0; a += 0.1) {
    const double l = jaakkola_lambda(a);
    CHECK(l > 0.0);
    CHECK(l < prev);
    prev = l;
  }
}

TEST_CASE("bound examples") {
  CHECK(logistic_bound_h(0.0, 1, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
  const double s3 = 1.0 / (1.0 + std::exp(-3.0));
  CHECK(logistic_bound_h(3.0, 1, 3.0) == doctest::Approx(s3).epsilon(1e-12));
  CHECK(logistic_bound_h(3.0, 1, 1.0) < s3);
}

TEST_CASE("bound never exceeds the likelihood on the grid and is tight at xi = |y|") {
  for (int t = 0; t <= 1; ++t) {
    for (int i = 0; i <= 80; ++i) {
      const double y = -10.0 + 0.25 * i;
      // e^{yt} sigma(-y), written independently of the library.
      const double exact = std::exp(y * t) / (1.0 + std::exp(y));
      for (int j = 0; j <= 40; ++j) {
        const double xi = 0.25 * j;
        CHECK(logistic_bound_h(y, t, xi) <= exact + 1e-12);
      }
      CHECK(std::abs(logistic_bound_h(y, t, std::abs(y)) - exact) <= 1e-12);
      CHECK(logistic_likelihood(y, t) == doctest::Approx(exact).epsilon(1e-13));
    }
  }
}

TEST_CASE("log forms agree and are stable") {
  CHECK(std::exp(log_logistic_bound_h(1.5, 0, 0.7)) ==
        doctest::Approx(logistic_bound_h(1.5, 0, 0.7)).epsilon(1e-14));
  CHECK(log_sigmoid(-800.0) == doctest::Approx(-800.0));
  CHECK(std::isfinite(log_sigmoid(800.0)));
  CHECK(sigmoid(0.0) == 0.5);
}
