#pragma once

#include <array>
#include <span>
#include <vector>

#include "scorepower/asymptotics.hpp"

namespace scorepower::logistic {

/// One stratum of a two-group binary design: population share t, treated
/// fraction rho, and true response probabilities under each arm.
struct StratumSpec {
  double t = 1.0;
  double rho = 0.5;
  double p1 = 0.5;
  double p0 = 0.5;
};

/// Stratified scenario in the model's own parameters: cell proportions by
/// (stratum, arm), stratum log odds ratios (first entry 0), treatment log
/// odds ratio, and the overall response rate that pins the intercept.
struct LogisticScenario {
  std::vector<double> pi_control;   // per stratum, control-arm share
  std::vector<double> pi_treated;   // per stratum, treated-arm share
  std::vector<double> stratum_log_or;  // size S, [0] == 0
  double treatment_log_or = 0.0;
  double mu_bar = 0.5;

  /// Two-stratum scenario from cell proportions (Pi1..Pi4) ordered as
  /// (g,z) = (0,1), (0,2), (1,1), (1,2).
  static LogisticScenario four_cell(const std::array<double, 4>& pi,
                                    double or_stratum, double or_treatment,
                                    double mu_bar);
  /// Single-stratum scenario with treated share pi.
  static LogisticScenario unstratified(double pi, double or_treatment,
                                       double mu_bar);
  void validate() const;
};

/// Intercept solving  mu_bar = sum of cell shares times response rates;
/// monotone bracketing + bisection, residual below 1e-10.
double solve_alpha0(const LogisticScenario& scenario);

/// True per-stratum specs implied by the scenario at the solved intercept.
std::vector<StratumSpec> strata_from_scenario(const LogisticScenario& scenario,
                                              double alpha0);

/// Closed-form E_beta, sigma0^2, sigma1^2 for the stratified score test.
AsymptoticSummary stratified_summary(std::span<const StratumSpec> strata);

DesignResult design(const LogisticScenario& scenario, double alpha,
                    double target_power);

/// 2x2xS table, responders x out of n per arm and stratum.
struct StratumCounts {
  long long x1 = 0;
  long long n1 = 0;
  long long x0 = 0;
  long long n0 = 0;
};

/// Stratified two-proportion score statistic (the Cochran statistic).
/// Throws when every stratum is degenerate (zero denominator).
double cochran_score_statistic(std::span<const StratumCounts> table);

/// Exemplary dataset for the scenario (generic-engine route: treatment
/// indicator plus stratum dummies).
ExemplaryDataset build_exemplary_dataset(const LogisticScenario& scenario);

}  // namespace scorepower::logistic
