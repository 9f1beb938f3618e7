#pragma once

#include <Eigen/Core>

namespace gsmooth {

double norm_pdf(double x);
double norm_cdf(double x);
// Inverse standard normal CDF, |error| < 1e-9 on (0,1).
double norm_ppf(double p);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// One-sided exact binomial lower confidence bound at level alpha:
// the Beta(alpha; k, n-k+1) quantile, 0 when k = 0.
double clopper_pearson_lower(long long k, long long n, double alpha);

}  // namespace gsmooth
