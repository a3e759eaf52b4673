#pragma once

namespace scorepower::binom {

enum class Direction { treated_lower, treated_higher };
enum class TestStatistic { score, wald_diff, wald_logodds };

/// Two-sample binomial design with a risk-difference margin: the null is
/// p1 - p0 = margin, rejected one-sided at z_{1-alpha/2} in the beneficial
/// direction.
struct TwoSampleBinomialSpec {
  long long n1 = 1;
  long long n0 = 1;
  double p1 = 0.5;
  double p0 = 0.5;
  double margin = 0.0;  // risk-difference null value, in (-1, 1)
  double alpha = 0.05;
  Direction direction = Direction::treated_lower;
  void validate() const;
};

struct ConstrainedMle {
  double p1 = 0.0;
  double p0 = 0.0;
};

/// Binomial MLE subject to p1 - p0 = margin (1-D concave profile in p0,
/// solved by safeguarded bisection on its derivative).
ConstrainedMle fm_constrained_mle(long long x1, long long n1, long long x0,
                                  long long n0, double margin);

/// Score statistic on the risk difference with the constrained-MLE variance.
/// Zero-variance cells (all successes or all failures under the constraint)
/// yield 0.
double fm_score_statistic(long long x1, long long n1, long long x0,
                          long long n0, double margin);

struct WaldPair {
  double z_diff = 0.0;
  double z_logodds = 0.0;
  bool diff_defined = true;      // false when both sample proportions are 0/1
  bool logodds_defined = true;   // false when any sample proportion is 0/1
};

/// Wald statistics on the risk difference and the log odds ratio; undefined
/// cells are flagged rather than given a value.
WaldPair wald_statistics(long long x1, long long n1, long long x0,
                         long long n0, double margin);

double log_binom_pmf(long long k, long long n, double p);

/// Exact power by complete enumeration over all (x1, x0) tables. Undefined
/// Wald cells count as non-rejections unless the point estimate violates the
/// null in the beneficial direction with the other arm interior. Guards the
/// enumeration at 1e8 cells.
double exact_power(const TwoSampleBinomialSpec& spec, TestStatistic stat);

}  // namespace scorepower::binom
