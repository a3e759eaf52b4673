#pragma once

#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "scorepower/family.hpp"

namespace scorepower {

/// One distinct covariate configuration with its population frequency.
struct CovariateConfig {
  double x = 0.0;
  Eigen::VectorXd z;
  double offset_base = 0.0;
  double pi = 0.0;
};

struct FollowupAtom {
  double time = 0.0;
  double prob = 0.0;
};

/// Discretized follow-up distribution: completers at tau plus dropout-time
/// quantile atoms.
struct FollowupGrid {
  std::vector<FollowupAtom> atoms;
  double mean_time() const;
};

/// Discretizes follow-up under exponential loss to follow-up calibrated so
/// that Pr(dropout before tau) = dropout. One atom (tau, 1-dropout) for
/// completers plus levels-1 equal-mass atoms at conditional dropout-time
/// quantiles. (The printed form of the source discretization uses the
/// completer mass inside the quantile transform, which exceeds the dropout
/// CDF's range for any dropout < 1; the quantiles here run over the dropout
/// mass itself, the only reading consistent with the atom probabilities.)
FollowupGrid discretize_followup(double dropout, double tau, int levels = 100);

/// Smallest outcome-support size J such that the tail mass above it is below
/// tail_tol at the largest design mean; Bernoulli always yields 2. Throws if
/// cap levels do not reach the tolerance.
int outcome_truncation(const Family& f, double max_mu, double tail_tol = 1e-5,
                       int cap = 200);

/// Weighted pseudo-data over every configuration x outcome-level pair.
struct ExemplaryDataset {
  std::vector<CovariateConfig> configs;
  std::vector<Observation> rows;  // config-major, `levels` rows per config
  int m = 0;
  int levels = 0;
  Family family;  // generating (true) family
  double total_weight() const;
};

/// Builds the exemplary dataset: row (k, j) carries weight
/// pi_k * Pr(Y = y_j | config k, true parameters).
ExemplaryDataset build_exemplary(std::vector<CovariateConfig> configs,
                                 const Family& f, double beta_true,
                                 const Eigen::VectorXd& alpha_true, int levels);

/// CSV export (columns: x, z..., offset, y, weight).
void write_csv(const ExemplaryDataset& ds, std::ostream& os);

}  // namespace scorepower
