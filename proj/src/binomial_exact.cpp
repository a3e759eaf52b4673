#include "scorepower/binomial_exact.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "scorepower/special.hpp"

namespace scorepower::binom {

namespace {

bool degenerate(double p) { return p <= 0.0 || p >= 1.0; }

// d/dp0 of the constrained binomial log-likelihood
double profile_deriv(long long x1, long long n1, long long x0, long long n0,
                     double margin, double p0) {
  const double p1 = p0 + margin;
  double d = 0.0;
  if (x1 > 0) d += x1 / p1;
  if (x1 < n1) d -= (n1 - x1) / (1.0 - p1);
  if (x0 > 0) d += x0 / p0;
  if (x0 < n0) d -= (n0 - x0) / (1.0 - p0);
  return d;
}

}  // namespace

void TwoSampleBinomialSpec::validate() const {
  if (n1 < 1 || n0 < 1)
    throw std::invalid_argument("binomial spec: group sizes must be >= 1");
  if (!(p1 > 0.0 && p1 < 1.0 && p0 > 0.0 && p0 < 1.0))
    throw std::invalid_argument("binomial spec: probabilities must be in (0,1)");
  if (!(margin > -1.0 && margin < 1.0))
    throw std::invalid_argument("binomial spec: margin must be in (-1,1)");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("binomial spec: alpha must be in (0,1)");
}

ConstrainedMle fm_constrained_mle(long long x1, long long n1, long long x0,
                                  long long n0, double margin) {
  if (x1 < 0 || x1 > n1 || x0 < 0 || x0 > n0)
    throw std::invalid_argument("fm_constrained_mle: counts out of range");
  if (std::abs(margin) >= 1.0)
    throw std::invalid_argument("fm_constrained_mle: |margin| must be < 1");
  double lo = std::max(0.0, -margin);
  double hi = std::min(1.0, 1.0 - margin);
  const double eps = 1e-14;
  // boundary maxima: derivative one-signed over the whole interval
  if (profile_deriv(x1, n1, x0, n0, margin, lo + eps) <= 0.0)
    return {lo + margin, lo};
  if (profile_deriv(x1, n1, x0, n0, margin, hi - eps) >= 0.0)
    return {hi + margin, hi};
  double a = lo + eps, b = hi - eps;
  while (b - a > 1e-15) {
    const double mid = 0.5 * (a + b);
    if (profile_deriv(x1, n1, x0, n0, margin, mid) > 0.0) a = mid; else b = mid;
  }
  const double p0 = 0.5 * (a + b);
  return {p0 + margin, p0};
}

double fm_score_statistic(long long x1, long long n1, long long x0,
                          long long n0, double margin) {
  const ConstrainedMle mle = fm_constrained_mle(x1, n1, x0, n0, margin);
  const double v = mle.p1 * (1.0 - mle.p1) / n1 + mle.p0 * (1.0 - mle.p0) / n0;
  if (!(v > 0.0)) return 0.0;
  const double p1 = static_cast<double>(x1) / n1;
  const double p0 = static_cast<double>(x0) / n0;
  return (p1 - p0 - margin) / std::sqrt(v);
}

WaldPair wald_statistics(long long x1, long long n1, long long x0,
                         long long n0, double margin) {
  WaldPair w;
  const double p1 = static_cast<double>(x1) / n1;
  const double p0 = static_cast<double>(x0) / n0;
  const double v = p1 * (1.0 - p1) / n1 + p0 * (1.0 - p0) / n0;
  if (v > 0.0) {
    w.z_diff = (p1 - p0 - margin) / std::sqrt(v);
  } else {
    w.diff_defined = false;
  }
  if (!degenerate(p1) && !degenerate(p0)) {
    const double vlog = 1.0 / (n1 * p1 * (1.0 - p1)) + 1.0 / (n0 * p0 * (1.0 - p0));
    w.z_logodds = (std::log(p1 / (1.0 - p1)) - std::log(p0 / (1.0 - p0))) /
                  std::sqrt(vlog);
  } else {
    w.logodds_defined = false;
  }
  return w;
}

double log_binom_pmf(long long k, long long n, double p) {
  if (k < 0 || k > n) throw std::invalid_argument("log_binom_pmf: k out of range");
  return log_gamma(n + 1.0) - log_gamma(k + 1.0) - log_gamma(n - k + 1.0) +
         k * std::log(p) + (n - k) * std::log1p(-p);
}

double exact_power(const TwoSampleBinomialSpec& spec, TestStatistic stat) {
  spec.validate();
  if (stat == TestStatistic::wald_logodds && spec.margin != 0.0)
    throw std::invalid_argument("exact_power: log-odds Wald applies to margin 0 only");
  if (spec.n1 * spec.n0 > 100000000LL)
    throw std::invalid_argument("exact_power: enumeration guard exceeded (n1*n0 > 1e8)");
  const double zcrit = normal_quantile(1.0 - spec.alpha / 2.0);
  const bool lower = spec.direction == Direction::treated_lower;

  std::vector<double> lp1(spec.n1 + 1), lp0(spec.n0 + 1);
  for (long long k = 0; k <= spec.n1; ++k) lp1[k] = log_binom_pmf(k, spec.n1, spec.p1);
  for (long long k = 0; k <= spec.n0; ++k) lp0[k] = log_binom_pmf(k, spec.n0, spec.p0);

  double power = 0.0;
  for (long long x1 = 0; x1 <= spec.n1; ++x1) {
    for (long long x0 = 0; x0 <= spec.n0; ++x0) {
      bool reject = false;
      if (stat == TestStatistic::score) {
        const double z = fm_score_statistic(x1, spec.n1, x0, spec.n0, spec.margin);
        reject = lower ? z <= -zcrit : z >= zcrit;
      } else {
        const WaldPair w = wald_statistics(x1, spec.n1, x0, spec.n0, spec.margin);
        const double ph1 = static_cast<double>(x1) / spec.n1;
        const double ph0 = static_cast<double>(x0) / spec.n0;
        if (stat == TestStatistic::wald_diff) {
          if (w.diff_defined)
            reject = lower ? w.z_diff <= -zcrit : w.z_diff >= zcrit;
          // undefined requires both arms degenerate: no interior arm, keep H0
        } else {
          if (w.logodds_defined) {
            reject = lower ? w.z_logodds <= -zcrit : w.z_logodds >= zcrit;
          } else if (!(degenerate(ph1) && degenerate(ph0))) {
            // one degenerate arm: reject when the estimate is infinitely
            // favorable and the other arm is interior
            reject = lower ? (ph1 == 0.0 || ph0 == 1.0) : (ph1 == 1.0 || ph0 == 0.0);
          }
        }
      }
      if (reject) power += std::exp(lp1[x1] + lp0[x0]);
    }
  }
  return power;
}

}  // namespace scorepower::binom
