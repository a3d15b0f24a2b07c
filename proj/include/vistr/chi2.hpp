#pragma once

namespace vistr {

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);

/// Chi-squared CDF with dof degrees of freedom.
double chi2_cdf(int dof, double x);

/// Quantile x with CDF_{chi2_dof}(x) = p, solved to 1e-9 absolute in CDF.
double chi2_quantile(int dof, double p);

}  // namespace vistr
