#pragma once

#include "scorepower/exemplary.hpp"
#include "scorepower/glm.hpp"

namespace scorepower {

enum class Method { new_formula, self_mauritsen, sigma0_based };
enum class Sidedness { two_sided, one_sided };

/// Per-subject asymptotic summary of the score statistic at (beta0, lambda*):
/// E_beta is the mean beta-score, sigma1_sq its variance under the true
/// model (after projecting out the nuisance estimation), sigma0_sq the
/// probability limit of the statistic's null variance.
struct AsymptoticSummary {
  double e_beta = 0.0;
  double sigma0_sq = 0.0;
  double sigma1_sq = 0.0;
  RestrictedFit lambda_star;
};

/// Fits lambda* to the exemplary dataset and aggregates the score mean,
/// total score covariance, information matrices, and the two variances.
AsymptoticSummary summarize(const ExemplaryDataset& ds, double beta0,
                            const FitOptions& opts = {});

double power_at(const AsymptoticSummary& s, double n, double alpha, Method m,
                Sidedness sides = Sidedness::two_sided);

/// Real-valued total sample size before rounding.
double sample_size_real(const AsymptoticSummary& s, double alpha,
                        double target_power, Method m,
                        Sidedness sides = Sidedness::two_sided);

/// Ceiling of sample_size_real.
long long sample_size(const AsymptoticSummary& s, double alpha,
                      double target_power, Method m,
                      Sidedness sides = Sidedness::two_sided);

/// Per-method sample sizes plus nominal powers evaluated at n_new.
struct DesignResult {
  long long n_new = 0;
  long long n_sm = 0;
  long long n_s0 = 0;
  double n_new_real = 0.0;
  double power_new = 0.0;
  double power_sm = 0.0;
  double power_s0 = 0.0;
  AsymptoticSummary summary;
  double alpha = 0.05;
  double target_power = 0.8;
  Sidedness sidedness = Sidedness::two_sided;
  double theta = 1.0;  // allocation ratio n1/n0
};

DesignResult design_from_summary(const AsymptoticSummary& s, double alpha,
                                 double target_power, Sidedness sides,
                                 double theta);

/// Per-arm split of a total sample size. Default splits the rounded-up total
/// by the allocation ratio; the allocation-consistent option instead rounds
/// the control arm up and sets n1 = ceil(theta * n0).
struct ArmSplit {
  long long n1 = 0;
  long long n0 = 0;
};
ArmSplit split_total(long long n_total, double theta,
                     bool allocation_consistent = false,
                     double n_total_real = 0.0);

}  // namespace scorepower
