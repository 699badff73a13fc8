#include "mixbo/normal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace mixbo {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kHalfLog2Pi = 0.91893853320467274178;   // log(2 pi) / 2
constexpr double kHalfLogPiOver2 = 0.22579135264472743236;  // log(pi / 2) / 2
}  // namespace

namespace normal {

double pdf(double z) { return std::exp(-0.5 * z * z - kHalfLog2Pi); }

double cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double log_cdf(double z) {
  if (z > 0.0) return std::log1p(-0.5 * std::erfc(z * kInvSqrt2));
  if (z > -5.0) return std::log(0.5 * std::erfc(-z * kInvSqrt2));
  return std::log(0.5 * erfcx(-z * kInvSqrt2)) - 0.5 * z * z;
}

double log_cdf_diff(double lower, double upper) {
  if (!(lower < upper)) return kLogZero;
  if (lower > 0.0) return log_cdf_diff(-upper, -lower);
  if (upper <= 0.0) {
    const double lu = log_cdf(upper);
    const double ll = log_cdf(lower);
    if (ll - lu >= 0.0) return kLogZero;
    return lu + log1mexp(ll - lu);
  }
  // lower <= 0 < upper: one minus both tails.
  const double tails = cdf(lower) + cdf(-upper);
  return std::log1p(-tails);
}

double quantile(double p) {
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double erfcx(double x) {
  if (x < 0.0) {
    if (x < -26.0) return std::numeric_limits<double>::infinity();
    return 2.0 * std::exp(x * x) - erfcx(-x);
  }
  if (x < 25.0) return std::exp(x * x) * std::erfc(x);
  // Asymptotic series; the first omitted term is below 1e-15 for x >= 25.
  const double t = 1.0 / (2.0 * x * x);
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k <= 6; ++k) {
    term *= -(2.0 * k - 1.0) * t;
    sum += term;
  }
  return sum / (x * std::sqrt(std::numbers::pi));
}

double log_h(double z) {
  if (z > -1.0) return std::log(pdf(z) + z * cdf(z));
  static const double kAsymptotic = 1.0 / std::sqrt(std::numeric_limits<double>::epsilon());
  if (z > -kAsymptotic) {
    const double a = std::log(erfcx(-z * kInvSqrt2) * std::abs(z)) + kHalfLogPiOver2;
    return -0.5 * z * z - kHalfLog2Pi + log1mexp(a);
  }
  return -0.5 * z * z - kHalfLog2Pi - 2.0 * std::log(std::abs(z));
}

}  // namespace normal

double log1mexp(double a) {
  if (a >= 0.0) return kLogZero;
  if (a > -std::numbers::ln2) return std::log(-std::expm1(a));
  return std::log1p(-std::exp(a));
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return kLogZero;
  const double peak = *std::max_element(values.begin(), values.end());
  if (peak <= kLogZero) return kLogZero;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

}  // namespace mixbo
