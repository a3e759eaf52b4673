#pragma once

#include <cstdint>

namespace scorepower {

/// log Gamma(x) for x > 0, Lanczos approximation (relative error < 1e-13).
double log_gamma(double x);

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile, rational approximation accurate to ~1e-12.
/// Throws std::domain_error outside (0, 1).
double normal_quantile(double p);

/// psi(a + y) - psi(a) for integer y >= 0, by exact finite summation.
double digamma_diff(int y, double a);

/// psi'(a + y) - psi'(a) for integer y >= 0.
double trigamma_diff(int y, double a);

/// Ceiling to integer with a small slack so that values a hair above an
/// integer (from float noise) do not get bumped up.
long long ceil_with_slack(double x, double slack = 1e-9);

}  // namespace scorepower
