#pragma once

#include <span>

namespace mixbo {

// Finite stand-in for log(0). Optimizers and sums never see a true -inf.
inline constexpr double kLogZero = -1e10;

namespace normal {

double pdf(double z);
double cdf(double z);
// log Phi(z), accurate deep into the lower tail.
double log_cdf(double z);
// log(Phi(upper) - Phi(lower)) for lower <= upper.
double log_cdf_diff(double lower, double upper);
double quantile(double p);

// exp(x^2) * erfc(x), scaled complementary error function.
double erfcx(double x);

// log(phi(z) + z * Phi(z)): the standardized expected-improvement
// function in log space, stable for arbitrarily negative z.
double log_h(double z);

}  // namespace normal

// log(1 - exp(a)) for a <= 0.
double log1mexp(double a);
// log(sum exp(values)), or kLogZero for an empty span.
double log_sum_exp(std::span<const double> values);

}  // namespace mixbo
