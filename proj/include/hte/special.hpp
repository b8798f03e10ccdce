#pragma once

#include <vector>

namespace hte {

// Numerically careful scalar special functions.  Everything the library needs
// beyond <cmath> lives here so that Eigen stays the only math dependency.

// log(1 + exp(x)) without overflow for large |x|.
double log1pexp(double x);

// Logistic function 1 / (1 + exp(-x)), stable in both tails.
double sigmoid(double x);

// Upper tail of the standard normal, P(Z > x).
double normal_sf(double x);

// Standard normal quantile (inverse CDF).  p must lie in (0, 1).
double normal_quantile(double p);

// Upper tail of the chi-squared distribution with df degrees of freedom,
// P(X > x).  Computed through the regularized upper incomplete gamma
// function Q(df/2, x/2).
double chisq_sf(double x, int df);

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x),
// a > 0, x >= 0.  Series expansion for x < a + 1, continued fraction
// otherwise.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Empirical quantile with linear interpolation between order statistics (the
// common spreadsheet/R-default definition).  level must lie in [0, 1]; the
// input is copied and sorted.
double quantile(std::vector<double> values, double level);

}  // namespace hte
