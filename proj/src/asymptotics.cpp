#include "scorepower/asymptotics.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "scorepower/special.hpp"

namespace scorepower {

AsymptoticSummary summarize(const ExemplaryDataset& ds, double beta0,
                            const FitOptions& opts) {
  if (ds.rows.empty()) throw std::invalid_argument("summarize: empty dataset");
  AsymptoticSummary out;
  out.lambda_star = fit_restricted(ds.rows, ds.family, beta0, opts);
  if (!out.lambda_star.converged)
    throw std::runtime_error("summarize: restricted fit did not converge");

  Family fitted = ds.family;
  fitted.dispersion = out.lambda_star.kappa_hat;
  // A dispersion fit that lands on the kappa = 0 boundary leaves no dispersion
  // fluctuation to project out; treat the null model as Poisson then.
  if (fitted.has_dispersion() && out.lambda_star.kappa_at_boundary)
    fitted.kind = FamilyKind::poisson_log;
  const Eigen::VectorXd& alpha = out.lambda_star.alpha_hat;
  const int p = static_cast<int>(alpha.size());
  const int d = 1 + p + (fitted.has_dispersion() ? 1 : 0);

  Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd second_moment = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd info_true = Eigen::MatrixXd::Zero(d, d);   // E_true[J]
  Eigen::MatrixXd info_null = Eigen::MatrixXd::Zero(d, d);   // Fisher at the fit
  for (size_t i = 0; i < ds.rows.size(); ++i) {
    const Observation& o = ds.rows[i];
    const Eigen::VectorXd s = score_contribution(fitted, o, beta0, alpha);
    const Eigen::MatrixXd j = observed_info(fitted, o, beta0, alpha);
    e += o.weight * s;
    second_moment += o.weight * (s * s.transpose());
    info_true += o.weight * j;
    // null expectation: reweight the same support point by the fitted model
    const double eta = beta0 * o.x + alpha.dot(o.z) + o.offset;
    const double mu_null = mean_from_linear(fitted, eta);
    const double pi_k = ds.configs[i / ds.levels].pi;
    info_null += pi_k * std::exp(log_pmf(fitted, o.y, mu_null)) * j;
  }
  const Eigen::MatrixXd v = second_moment - e * e.transpose();

  out.e_beta = e[0];
  // A = [1, -Itilde_beta,lambda' * Itilde_lambda,lambda^{-1}]
  const auto lam = Eigen::seq(1, d - 1);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info_true(lam, lam));
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("summarize: singular nuisance information (collinear design)");
  const Eigen::VectorXd proj = ldlt.solve(info_true(lam, 0));
  if ((info_true(lam, lam) * proj - info_true(lam, 0)).norm() >
      1e-8 * (1.0 + info_true(lam, 0).norm()))
    throw std::runtime_error("summarize: singular nuisance information (collinear design)");
  Eigen::VectorXd a(d);
  a[0] = 1.0;
  a(lam) = -proj;
  out.sigma1_sq = a.dot(v * a);

  const Eigen::VectorXd proj0 = info_null(lam, lam).ldlt().solve(info_null(lam, 0));
  out.sigma0_sq = info_null(0, 0) - info_null(0, lam).dot(proj0);
  if (!(out.sigma0_sq > 0.0) || !(out.sigma1_sq > 0.0))
    throw std::runtime_error("summarize: nonpositive variance (degenerate design)");
  return out;
}

namespace {

double crit_z(double alpha, Sidedness sides) {
  return normal_quantile(sides == Sidedness::two_sided ? 1.0 - alpha / 2.0
                                                       : 1.0 - alpha);
}

}  // namespace

double power_at(const AsymptoticSummary& s, double n, double alpha, Method m,
                Sidedness sides) {
  if (!(n > 0.0)) throw std::invalid_argument("power_at: n must be positive");
  const double z = crit_z(alpha, sides);
  const double drift = std::sqrt(n) * std::abs(s.e_beta);
  const double s0 = std::sqrt(s.sigma0_sq), s1 = std::sqrt(s.sigma1_sq);
  switch (m) {
    case Method::new_formula:
      return normal_cdf(drift / s1 - z * s0 / s1);
    case Method::self_mauritsen:
      return normal_cdf(drift / s1 - z);
    case Method::sigma0_based:
      return normal_cdf(drift / s0 - z);
  }
  throw std::logic_error("power_at: unknown method");
}

double sample_size_real(const AsymptoticSummary& s, double alpha,
                        double target_power, Method m, Sidedness sides) {
  if (!(target_power > 0.0 && target_power < 1.0))
    throw std::invalid_argument("sample_size: target power must be in (0,1)");
  if (s.e_beta == 0.0)
    throw std::invalid_argument("sample_size: E_beta is zero, no finite size");
  const double z = crit_z(alpha, sides);
  const double zp = normal_quantile(target_power);
  const double s0 = std::sqrt(s.sigma0_sq), s1 = std::sqrt(s.sigma1_sq);
  double num;
  switch (m) {
    case Method::new_formula: num = z * s0 + zp * s1; break;
    case Method::self_mauritsen: num = (z + zp) * s1; break;
    case Method::sigma0_based: num = (z + zp) * s0; break;
    default: throw std::logic_error("sample_size: unknown method");
  }
  return num * num / (s.e_beta * s.e_beta);
}

long long sample_size(const AsymptoticSummary& s, double alpha,
                      double target_power, Method m, Sidedness sides) {
  return ceil_with_slack(sample_size_real(s, alpha, target_power, m, sides));
}

DesignResult design_from_summary(const AsymptoticSummary& s, double alpha,
                                 double target_power, Sidedness sides,
                                 double theta) {
  DesignResult r;
  r.summary = s;
  r.alpha = alpha;
  r.target_power = target_power;
  r.sidedness = sides;
  r.theta = theta;
  r.n_new_real = sample_size_real(s, alpha, target_power, Method::new_formula, sides);
  r.n_new = ceil_with_slack(r.n_new_real);
  r.n_sm = sample_size(s, alpha, target_power, Method::self_mauritsen, sides);
  r.n_s0 = sample_size(s, alpha, target_power, Method::sigma0_based, sides);
  const double n = static_cast<double>(r.n_new);
  r.power_new = power_at(s, n, alpha, Method::new_formula, sides);
  r.power_sm = power_at(s, n, alpha, Method::self_mauritsen, sides);
  r.power_s0 = power_at(s, n, alpha, Method::sigma0_based, sides);
  return r;
}

ArmSplit split_total(long long n_total, double theta, bool allocation_consistent,
                     double n_total_real) {
  ArmSplit split;
  if (allocation_consistent) {
    const double n0_real = (n_total_real > 0.0 ? n_total_real : n_total) / (1.0 + theta);
    split.n0 = ceil_with_slack(n0_real);
    split.n1 = ceil_with_slack(theta * split.n0);
  } else {
    split.n1 = static_cast<long long>(std::floor(n_total * theta / (1.0 + theta) + 0.5));
    split.n0 = n_total - split.n1;
  }
  return split;
}

}  // namespace scorepower
