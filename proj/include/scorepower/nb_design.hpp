#pragma once

#include <optional>
#include <span>
#include <vector>

#include "scorepower/asymptotics.hpp"

namespace scorepower::nb {

/// Negative binomial recurrent-event trial scenario. margin = 1 is the
/// superiority design; margin > 1 tests noninferiority on the rate ratio at
/// one-sided level alpha/2 (the two-sided alpha convention).
struct NbTrialSpec {
  double lambda0 = 1.0;      // control event rate per unit time
  double rate_ratio = 0.5;   // lambda1 / lambda0 under the alternative
  double kappa = 0.0;        // dispersion, Var = mu + kappa mu^2
  double margin = 1.0;       // M0 >= 1
  double tau = 1.0;          // planned follow-up duration
  double dropout = 0.0;      // probability of loss to follow-up before tau
  std::optional<double> dropout_treated;  // per-arm override
  double theta = 1.0;        // allocation ratio n1/n0
  double alpha = 0.05;
  double target_power = 0.8;
  Sidedness sidedness = Sidedness::two_sided;
  int followup_levels = 100;     // L
  int max_outcome_levels = 200;  // J
  double tail_tol = 1e-5;

  void validate() const;  // throws std::invalid_argument naming the field
};

/// Exemplary dataset for the scenario: two arms times the discretized
/// follow-up grid, outcome support truncated at max_outcome_levels.
ExemplaryDataset build_exemplary_dataset(const NbTrialSpec& spec);

/// Full design computation through the generic engine.
DesignResult design(const NbTrialSpec& spec);

struct MomentsKappa {
  double mu_bar = 0.0;
  double kappa_star = 0.0;
};

/// Method-of-moments limits of the restricted fit in a superiority design
/// with equal follow-up: common mean (theta mu1 + mu0)/(theta + 1) and the
/// inflated dispersion kappa*.
MomentsKappa moments_kappa_star(double mu0, double mu1, double theta, double kappa);

/// Control-arm size for the equal-follow-up special case (all subjects share
/// follow-up t = spec.tau, no dropout). Runs the two-configuration exemplary
/// engine; the total ceil((1+theta) n0_real) agrees with design() up to
/// rounding.
long long size_equal_followup(const NbTrialSpec& spec);

struct ZhuLakkisResult {
  double n0_real = 0.0;
  long long n0 = 0;
  long long total = 0;
  double mu0_null = 0.0;  // limiting restricted control mean at fixed kappa
  double mean_exposure = 0.0;
};

/// Comparator sample size based on the Wald-type statistic
/// log(mu1_hat/mu0_hat) - log(M0) with known kappa and follow-up set to the
/// mean exposure.
ZhuLakkisResult zhu_lakkis_size(const NbTrialSpec& spec);

/// Nominal power of the comparator method at a given total sample size.
double zhu_lakkis_power(const NbTrialSpec& spec, double n_total);

/// Per-subject trial record.
struct NbSubject {
  int g = 0;
  double t = 1.0;
  int y = 0;
};

/// Restricted ML fit of a two-group NB model with common rate intercept and
/// the margin folded into the treated-arm exposure.
struct TwoGroupFit {
  double log_rate = 0.0;  // alpha_hat: fitted control log rate
  double kappa = 0.0;
  bool kappa_boundary = false;
  bool converged = false;
  int iterations = 0;
  double max_score = 0.0;
};

TwoGroupFit fit_two_group_restricted(std::span<const NbSubject> data, double margin,
                                     double kappa_init = 0.0);

/// Score statistic per the explicit two-group form (sum of treated-arm
/// weighted residuals over the Schur-complement denominator), using the
/// generic restricted GLM fit. Agrees with glm score_statistic to 1e-10.
double score_test(std::span<const NbSubject> data, double margin);

/// Same statistic computed from the fast two-group fit (simulation path).
double score_test_fast(std::span<const NbSubject> data, double margin,
                       const TwoGroupFit& fit);

/// Simplified equal-follow-up statistic (ybar1 - M0 ybar0 over the plug-in
/// variance). Identical to the score test when margin = 1; requires common t.
double equal_followup_statistic(std::span<const NbSubject> data, double margin);

/// Conversion to GLM observations (z = [1], offset = log t).
std::vector<Observation> to_observations(std::span<const NbSubject> data);

/// Score CI for the log rate ratio; returns the interval on the ratio scale
/// alongside the log-scale endpoints.
struct RatioCi {
  ScoreCi log_scale;
  double ratio_lo = 0.0;
  double ratio_hi = 0.0;
  double ratio_hat = 0.0;
};
RatioCi rate_ratio_confidence_interval(std::span<const NbSubject> data, double level);

}  // namespace scorepower::nb
