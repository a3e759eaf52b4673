#include "scorepower/logistic_design.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace scorepower::logistic {

namespace {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double overall_rate(const LogisticScenario& sc, double alpha0) {
  double r = 0.0;
  for (size_t s = 0; s < sc.pi_control.size(); ++s) {
    r += sc.pi_control[s] * expit(alpha0 + sc.stratum_log_or[s]);
    r += sc.pi_treated[s] * expit(alpha0 + sc.stratum_log_or[s] + sc.treatment_log_or);
  }
  return r;
}

}  // namespace

LogisticScenario LogisticScenario::four_cell(const std::array<double, 4>& pi,
                                             double or_stratum, double or_treatment,
                                             double mu_bar) {
  LogisticScenario sc;
  sc.pi_control = {pi[0], pi[1]};
  sc.pi_treated = {pi[2], pi[3]};
  sc.stratum_log_or = {0.0, std::log(or_stratum)};
  sc.treatment_log_or = std::log(or_treatment);
  sc.mu_bar = mu_bar;
  sc.validate();
  return sc;
}

LogisticScenario LogisticScenario::unstratified(double pi, double or_treatment,
                                                double mu_bar) {
  LogisticScenario sc;
  sc.pi_control = {1.0 - pi};
  sc.pi_treated = {pi};
  sc.stratum_log_or = {0.0};
  sc.treatment_log_or = std::log(or_treatment);
  sc.mu_bar = mu_bar;
  sc.validate();
  return sc;
}

void LogisticScenario::validate() const {
  const size_t s = pi_control.size();
  if (s == 0 || pi_treated.size() != s || stratum_log_or.size() != s)
    throw std::invalid_argument("logistic scenario: inconsistent stratum counts");
  if (stratum_log_or[0] != 0.0)
    throw std::invalid_argument("logistic scenario: first stratum log OR must be 0");
  double total = 0.0;
  for (size_t i = 0; i < s; ++i) {
    if (pi_control[i] < 0.0 || pi_treated[i] < 0.0)
      throw std::invalid_argument("logistic scenario: negative cell proportion");
    total += pi_control[i] + pi_treated[i];
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("logistic scenario: cell proportions must sum to 1");
  if (!(mu_bar > 0.0 && mu_bar < 1.0))
    throw std::invalid_argument("logistic scenario: mu_bar must be in (0,1)");
}

double solve_alpha0(const LogisticScenario& sc) {
  sc.validate();
  double lo = -60.0, hi = 60.0;
  if (overall_rate(sc, lo) > sc.mu_bar || overall_rate(sc, hi) < sc.mu_bar)
    throw std::invalid_argument("solve_alpha0: mu_bar outside the achievable range");
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (overall_rate(sc, mid) < sc.mu_bar) lo = mid; else hi = mid;
  }
  const double a0 = 0.5 * (lo + hi);
  if (std::abs(overall_rate(sc, a0) - sc.mu_bar) > 1e-10)
    throw std::runtime_error("solve_alpha0: residual above tolerance");
  return a0;
}

std::vector<StratumSpec> strata_from_scenario(const LogisticScenario& sc,
                                              double alpha0) {
  std::vector<StratumSpec> strata(sc.pi_control.size());
  for (size_t s = 0; s < strata.size(); ++s) {
    const double ts = sc.pi_control[s] + sc.pi_treated[s];
    strata[s].t = ts;
    strata[s].rho = ts > 0.0 ? sc.pi_treated[s] / ts : 0.0;
    strata[s].p0 = expit(alpha0 + sc.stratum_log_or[s]);
    strata[s].p1 = expit(alpha0 + sc.stratum_log_or[s] + sc.treatment_log_or);
  }
  return strata;
}

AsymptoticSummary stratified_summary(std::span<const StratumSpec> strata) {
  AsymptoticSummary s;
  Eigen::VectorXd alpha(strata.size());
  for (size_t i = 0; i < strata.size(); ++i) {
    const auto& st = strata[i];
    if (!(st.t >= 0.0) || !(st.rho > 0.0 && st.rho < 1.0) ||
        !(st.p1 > 0.0 && st.p1 < 1.0) || !(st.p0 > 0.0 && st.p0 < 1.0))
      throw std::invalid_argument("stratified_summary: entries must be interior");
    const double w = st.t * st.rho * (1.0 - st.rho);
    const double pstar = st.rho * st.p1 + (1.0 - st.rho) * st.p0;
    s.e_beta += w * (st.p1 - st.p0);
    s.sigma0_sq += w * pstar * (1.0 - pstar);
    s.sigma1_sq += w * ((1.0 - st.rho) * st.p1 * (1.0 - st.p1) +
                        st.rho * st.p0 * (1.0 - st.p0));
    alpha[i] = std::log(pstar / (1.0 - pstar));
  }
  // the restricted null fit is saturated per stratum: logit of p*_s
  s.lambda_star.alpha_hat = alpha;
  s.lambda_star.converged = true;
  s.lambda_star.beta0 = 0.0;
  return s;
}

DesignResult design(const LogisticScenario& sc, double alpha, double target_power) {
  const double a0 = solve_alpha0(sc);
  const std::vector<StratumSpec> strata = strata_from_scenario(sc, a0);
  const AsymptoticSummary s = stratified_summary(strata);
  const double pr_treated =
      std::accumulate(sc.pi_treated.begin(), sc.pi_treated.end(), 0.0);
  const double theta = pr_treated / (1.0 - pr_treated);
  return design_from_summary(s, alpha, target_power, Sidedness::two_sided, theta);
}

double cochran_score_statistic(std::span<const StratumCounts> table) {
  double num = 0.0, den = 0.0;
  for (const auto& c : table) {
    if (c.n1 <= 0 || c.n0 <= 0)
      throw std::invalid_argument("cochran_score_statistic: empty arm in a stratum");
    if (c.x1 < 0 || c.x1 > c.n1 || c.x0 < 0 || c.x0 > c.n0)
      throw std::invalid_argument("cochran_score_statistic: counts out of range");
    const double ns = static_cast<double>(c.n1 + c.n0);
    const double w = c.n1 * c.n0 / ns;
    const double p1 = static_cast<double>(c.x1) / c.n1;
    const double p0 = static_cast<double>(c.x0) / c.n0;
    const double pbar = static_cast<double>(c.x1 + c.x0) / ns;
    num += w * (p1 - p0);
    den += w * pbar * (1.0 - pbar);
  }
  if (!(den > 0.0))
    throw std::runtime_error("cochran_score_statistic: zero denominator (all outcomes identical)");
  return num / std::sqrt(den);
}

ExemplaryDataset build_exemplary_dataset(const LogisticScenario& sc) {
  const double a0 = solve_alpha0(sc);
  const size_t S = sc.pi_control.size();
  std::vector<CovariateConfig> configs;
  configs.reserve(2 * S);
  for (size_t s = 0; s < S; ++s) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<int>(S));
    z[0] = 1.0;                                   // intercept
    if (s > 0) z[static_cast<int>(s)] = 1.0;      // stratum dummy
    configs.push_back({1.0, z, 0.0, sc.pi_treated[s]});
    configs.push_back({0.0, z, 0.0, sc.pi_control[s]});
  }
  Eigen::VectorXd alpha_true(static_cast<int>(S));
  alpha_true[0] = a0;
  for (size_t s = 1; s < S; ++s) alpha_true[static_cast<int>(s)] = sc.stratum_log_or[s];
  return build_exemplary(std::move(configs), Family::bernoulli(),
                         sc.treatment_log_or, alpha_true, 2);
}

}  // namespace scorepower::logistic
