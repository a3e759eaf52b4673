#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "scorepower/family.hpp"

namespace scorepower {

/// Maximum-likelihood fit of the nuisance parameters with the parameter of
/// interest held at beta0.
struct RestrictedFit {
  Eigen::VectorXd alpha_hat;
  double kappa_hat = 0.0;
  double beta0 = 0.0;
  bool has_dispersion = false;
  bool kappa_at_boundary = false;
  bool converged = false;
  int iterations = 0;
  double max_score_residual = 0.0;
  double log_likelihood = 0.0;
};

struct FitOptions {
  double score_tol = 1e-11;   // on max |weighted score|, scaled by total weight
  double step_tol = 1e-11;
  int max_iterations = 200;
  double kappa_init = 0.0;    // 0 = choose automatically
  double kappa_floor = 1e-10;
};

/// Log probability mass of y under the family at mean mu.
double log_pmf(const Family& f, int y, double mu);

/// Contribution of one observation to the score, with respect to
/// (beta, alpha..., kappa); the kappa component is present only for the
/// negative binomial and is evaluated at f.dispersion.
Eigen::VectorXd score_contribution(const Family& f, const Observation& obs,
                                   double beta, const Eigen::VectorXd& alpha);

/// Contribution of one observation to the observed information (negative
/// Hessian of its log pmf), same parameter layout as score_contribution.
Eigen::MatrixXd observed_info(const Family& f, const Observation& obs,
                              double beta, const Eigen::VectorXd& alpha);

struct InfoPair {
  Eigen::MatrixXd observed_expectation;  // E over a supplied true model
  Eigen::MatrixXd fisher;                // E over the fitted model itself
};

/// Expected information contributions for one covariate configuration.
/// `fitted` (with beta, alpha) fixes where derivatives are evaluated; the
/// expectation for the first matrix runs over `truth` at mean true_mu, both
/// summed over the truncated support {0, .., support_levels-1}.
InfoPair info_contributions(const Family& fitted, const Observation& obs,
                            double beta, const Eigen::VectorXd& alpha,
                            const Family& truth, double true_mu,
                            int support_levels);

RestrictedFit fit_restricted(std::span<const Observation> data, const Family& f,
                             double beta0, const FitOptions& opts = {});

/// Weighted log-likelihood at given parameters (beta enters via obs.x).
double log_likelihood(std::span<const Observation> data, const Family& f,
                      double beta, const Eigen::VectorXd& alpha);

/// Score statistic Z for H0: beta = beta0 (Fisher-information Schur
/// complement in the denominator). Throws if the variance is not positive.
double score_statistic(std::span<const Observation> data, const Family& f,
                       double beta0, const FitOptions& opts = {});

struct ScoreCi {
  double lo = 0.0;
  double hi = 0.0;
  double beta_hat = 0.0;
  bool lo_open = false;
  bool hi_open = false;
};

/// Confidence interval for beta by inverting the score test: brackets
/// outward from the unrestricted MLE, then bisects |Z(beta)| = z.
ScoreCi score_confidence_interval(std::span<const Observation> data,
                                  const Family& f, double level,
                                  const FitOptions& opts = {});

/// Unrestricted MLE of beta (with nuisance parameters profiled out).
double unrestricted_beta(std::span<const Observation> data, const Family& f,
                         const FitOptions& opts = {});

}  // namespace scorepower
