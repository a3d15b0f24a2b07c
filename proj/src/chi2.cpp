#include "vistr/chi2.hpp"

#include <cmath>
#include <limits>

#include "vistr/errors.hpp"

namespace vistr {

namespace {

// Series expansion of P(a,x), converges fast for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw NumericalError("incomplete gamma series failed to converge");
}

// Continued fraction for Q(a,x) via modified Lentz, for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16)
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw NumericalError("incomplete gamma continued fraction failed to converge");
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0)) throw ConfigError("gamma_p: a must be > 0");
  if (x < 0) throw ConfigError("gamma_p: x must be >= 0");
  if (x == 0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi2_cdf(int dof, double x) {
  if (dof < 1) throw ConfigError("chi2_cdf: dof must be >= 1");
  if (x <= 0) return 0.0;
  return gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_quantile(int dof, double p) {
  if (dof < 1) throw ConfigError("chi2_quantile: dof must be >= 1");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("chi2_quantile: p must be in (0,1)");

  // Wilson-Hilferty starting point.
  const double d = static_cast<double>(dof);
  // Inverse normal via Acklam-style rational bisection is overkill here; a crude
  // start suffices since Newton is safeguarded by a bracket.
  double x = d * std::pow(1.0 - 2.0 / (9.0 * d) , 3.0);
  if (!(x > 0) || !std::isfinite(x)) x = d;

  // Bracket the root.
  double lo = 0.0;
  double hi = std::max(x, 1.0);
  while (chi2_cdf(dof, hi) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) throw NumericalError("chi2_quantile: failed to bracket");
  }
  x = std::clamp(x, lo + 1e-12, hi);

  for (int iter = 0; iter < 200; ++iter) {
    const double f = chi2_cdf(dof, x) - p;
    if (f > 0)
      hi = x;
    else
      lo = x;
    // Newton step with the chi-squared density; fall back to bisection.
    const double logpdf =
        (0.5 * d - 1.0) * std::log(x) - 0.5 * x - std::lgamma(0.5 * d) - 0.5 * d * std::log(2.0);
    const double pdf = std::exp(logpdf);
    double next = pdf > 0 ? x - f / pdf : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    // Converge in x, not in CDF value: in the tails the density is tiny and a
    // small CDF residual still means a large quantile error.
    if (std::fabs(next - x) < 1e-12 * std::max(1.0, x)) return next;
    x = next;
  }
  if (std::fabs(chi2_cdf(dof, x) - p) < 1e-9) return x;
  throw NumericalError("chi2_quantile: did not converge");
}

}  // namespace vistr
