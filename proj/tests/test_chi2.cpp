#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "vistr/chi2.hpp"
#include "vistr/errors.hpp"

using namespace vistr;

TEST_CASE("chi2 quantile closed forms and oracle values") {
  // dof=2 is an exponential: quantile(p) = -2 ln(1-p).
  for (double alpha : {0.1, 0.01, 0.005, 0.001})
    CHECK(chi2_quantile(2, 1 - alpha) == doctest::Approx(-2.0 * std::log(alpha)).epsilon(1e-9));

  CHECK(chi2_quantile(6, 0.995) == doctest::Approx(18.5476).epsilon(1e-4));
  CHECK(chi2_quantile(1, 0.5) == doctest::Approx(0.4549).epsilon(1e-3));
}

TEST_CASE("chi2 CDF matches Simpson-integration oracle") {
  for (int dof : {1, 2, 3, 6, 10}) {
    for (double x : {0.1, 0.5, 1.0, 3.0, 8.0, 20.0}) {
      CHECK(chi2_cdf(dof, x) == doctest::Approx(oracle::chi2_cdf_simpson(dof, x)).epsilon(1e-7));
    }
  }
}

TEST_CASE("quantile inverts the CDF to 1e-9") {
  for (int dof : {1, 2, 4, 6, 12}) {
    for (double p : {0.01, 0.25, 0.5, 0.9, 0.995, 0.9999}) {
      const double x = chi2_quantile(dof, p);
      CHECK(std::abs(chi2_cdf(dof, x) - p) <= 1e-9);
    }
  }
}

TEST_CASE("chi2 argument validation") {
  CHECK_THROWS_AS(chi2_quantile(6, 0.0), ConfigError);
  CHECK_THROWS_AS(chi2_quantile(6, 1.0), ConfigError);
  CHECK_THROWS_AS(chi2_quantile(0, 0.5), ConfigError);
  CHECK(chi2_cdf(3, 0.0) == 0.0);
  CHECK(chi2_cdf(3, -1.0) == 0.0);
}
