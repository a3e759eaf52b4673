#include "scorepower/nb_design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "scorepower/special.hpp"

namespace scorepower::nb {

namespace {

Family design_family(const NbTrialSpec& spec) {
  return spec.kappa > 0.0 ? Family::negbin(spec.kappa) : Family::poisson();
}

double mean_exposure(double dropout, double tau) {
  if (dropout <= 0.0) return tau;
  const double rate = -std::log1p(-dropout) / tau;
  return dropout / rate;  // (1 - exp(-rate tau)) / rate with G(tau) = dropout
}

}  // namespace

void NbTrialSpec::validate() const {
  const auto fail = [](const char* what) { throw std::invalid_argument(what); };
  if (!(lambda0 > 0.0)) fail("nb spec: lambda0 must be positive");
  if (!(rate_ratio > 0.0)) fail("nb spec: rate_ratio must be positive");
  if (kappa < 0.0) fail("nb spec: kappa must be nonnegative");
  if (margin < 1.0) fail("nb spec: margin must be >= 1");
  if (!(rate_ratio < margin))
    fail("nb spec: rate_ratio must be below margin for a finite sample size");
  if (!(tau > 0.0)) fail("nb spec: tau must be positive");
  if (dropout < 0.0 || dropout >= 1.0) fail("nb spec: dropout must be in [0,1)");
  if (dropout_treated &&
      (*dropout_treated < 0.0 || *dropout_treated >= 1.0))
    fail("nb spec: dropout_treated must be in [0,1)");
  if (!(theta > 0.0)) fail("nb spec: theta must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("nb spec: alpha must be in (0,1)");
  if (!(target_power > 0.0 && target_power < 1.0))
    fail("nb spec: target_power must be in (0,1)");
  if (followup_levels < 2) fail("nb spec: followup_levels must be >= 2");
  if (max_outcome_levels < 2) fail("nb spec: max_outcome_levels must be >= 2");
  if (!(tail_tol > 0.0)) fail("nb spec: tail_tol must be positive");
}

ExemplaryDataset build_exemplary_dataset(const NbTrialSpec& spec) {
  spec.validate();
  const Family f = design_family(spec);
  const double lambda1 = spec.rate_ratio * spec.lambda0;
  // with no dropout the follow-up grid collapses to a single atom per arm
  const FollowupGrid grid1 = discretize_followup(
      spec.dropout_treated.value_or(spec.dropout), spec.tau, spec.followup_levels);
  const FollowupGrid grid0 =
      discretize_followup(spec.dropout, spec.tau, spec.followup_levels);
  const double share1 = spec.theta / (1.0 + spec.theta);
  std::vector<CovariateConfig> configs;
  configs.reserve(grid1.atoms.size() + grid0.atoms.size());
  Eigen::VectorXd intercept(1);
  intercept << 1.0;
  for (const auto& a : grid1.atoms)
    configs.push_back({1.0, intercept, std::log(a.time), share1 * a.prob});
  for (const auto& a : grid0.atoms)
    configs.push_back({0.0, intercept, std::log(a.time), (1.0 - share1) * a.prob});
  // confirm the truncated support holds the tail below tolerance
  (void)outcome_truncation(f, std::max(spec.lambda0, lambda1) * spec.tau,
                           spec.tail_tol, spec.max_outcome_levels);
  Eigen::VectorXd alpha_true(1);
  alpha_true << std::log(spec.lambda0);
  return build_exemplary(std::move(configs), f, std::log(spec.rate_ratio),
                         alpha_true, spec.max_outcome_levels);
}

DesignResult design(const NbTrialSpec& spec) {
  const ExemplaryDataset ds = build_exemplary_dataset(spec);
  FitOptions opts;
  opts.kappa_init = spec.kappa;
  const AsymptoticSummary s = summarize(ds, std::log(spec.margin), opts);
  return design_from_summary(s, spec.alpha, spec.target_power, spec.sidedness,
                             spec.theta);
}

MomentsKappa moments_kappa_star(double mu0, double mu1, double theta, double kappa) {
  MomentsKappa r;
  r.mu_bar = (theta * mu1 + mu0) / (theta + 1.0);
  const double mb2 = r.mu_bar * r.mu_bar;
  r.kappa_star = kappa * (theta * mu1 * mu1 + mu0 * mu0) / ((theta + 1.0) * mb2) +
                 theta * (mu1 - mu0) * (mu1 - mu0) /
                     ((theta + 1.0) * (theta + 1.0) * mb2);
  return r;
}

long long size_equal_followup(const NbTrialSpec& spec) {
  NbTrialSpec flat = spec;
  flat.dropout = 0.0;
  flat.dropout_treated.reset();
  const DesignResult r = design(flat);
  return ceil_with_slack(r.n_new_real / (1.0 + spec.theta));
}

ZhuLakkisResult zhu_lakkis_size(const NbTrialSpec& spec) {
  spec.validate();
  if (!(spec.kappa > 0.0))
    throw std::invalid_argument("zhu_lakkis_size: kappa must be positive and known");
  ZhuLakkisResult r;
  r.mean_exposure = mean_exposure(spec.dropout, spec.tau);
  const double tbar = r.mean_exposure;
  const double mu0 = spec.lambda0 * tbar;
  const double mu1 = spec.rate_ratio * spec.lambda0 * tbar;
  const double m0 = spec.margin, th = spec.theta, k = spec.kappa;
  const double a = -k * m0 * (1.0 + th);
  const double b = k * (mu0 * m0 + th * mu1) - (1.0 + th * m0);
  const double c = mu0 + th * mu1;
  const double disc = b * b - 4.0 * a * c;
  if (!(disc >= 0.0))
    throw std::logic_error("zhu_lakkis_size: negative discriminant");
  r.mu0_null = (-b - std::sqrt(disc)) / (2.0 * a);
  const double mu1_null = m0 * r.mu0_null;
  const double v0 = 1.0 / r.mu0_null + 1.0 / (th * mu1_null) + (1.0 + th) / th * k;
  const double v1 = 1.0 / mu0 + 1.0 / (th * mu1) + (1.0 + th) / th * k;
  const double eff = std::log(mu1 / mu0) - std::log(m0);
  const double z = normal_quantile(1.0 - spec.alpha / 2.0);
  const double zp = normal_quantile(spec.target_power);
  r.n0_real = std::pow(z * std::sqrt(v0) + zp * std::sqrt(v1), 2) / (eff * eff);
  r.n0 = ceil_with_slack(r.n0_real);
  r.total = ceil_with_slack((1.0 + th) * r.n0_real);
  return r;
}

double zhu_lakkis_power(const NbTrialSpec& spec, double n_total) {
  const ZhuLakkisResult zl = zhu_lakkis_size(spec);
  const double tbar = zl.mean_exposure;
  const double mu0 = spec.lambda0 * tbar;
  const double mu1 = spec.rate_ratio * spec.lambda0 * tbar;
  const double th = spec.theta, k = spec.kappa;
  const double v0 = 1.0 / zl.mu0_null + 1.0 / (th * spec.margin * zl.mu0_null) +
                    (1.0 + th) / th * k;
  const double v1 = 1.0 / mu0 + 1.0 / (th * mu1) + (1.0 + th) / th * k;
  const double eff = std::log(mu1 / mu0) - std::log(spec.margin);
  const double n0 = n_total / (1.0 + th);
  const double z = normal_quantile(1.0 - spec.alpha / 2.0);
  return normal_cdf(std::sqrt(n0) * std::abs(eff) / std::sqrt(v1) -
                    z * std::sqrt(v0 / v1));
}

// ---------------------------------------------------------------------------
// Per-subject data paths
// ---------------------------------------------------------------------------

std::vector<Observation> to_observations(std::span<const NbSubject> data) {
  std::vector<Observation> obs;
  obs.reserve(data.size());
  Eigen::VectorXd intercept(1);
  intercept << 1.0;
  for (const auto& s : data) {
    if (!(s.t > 0.0)) throw std::invalid_argument("nb data: follow-up must be positive");
    if (s.y < 0) throw std::invalid_argument("nb data: negative count");
    Observation o;
    o.x = s.g ? 1.0 : 0.0;
    o.z = intercept;
    o.offset = std::log(s.t);
    o.y = s.y;
    obs.push_back(std::move(o));
  }
  return obs;
}

TwoGroupFit fit_two_group_restricted(std::span<const NbSubject> data, double margin,
                                     double kappa_init) {
  TwoGroupFit fit;
  const size_t n = data.size();
  if (n == 0) return fit;
  double sum_y = 0.0, sum_c = 0.0;
  int max_y = 0;
  for (const auto& s : data) {
    sum_y += s.y;
    sum_c += s.t * (s.g ? margin : 1.0);
    max_y = std::max(max_y, s.y);
  }
  if (!(sum_y > 0.0)) return fit;  // all-zero outcomes: no finite MLE
  const double tol = 1e-11 * std::max<double>(1.0, static_cast<double>(n));

  // tail counts for the dispersion log-likelihood pieces
  std::vector<double> tail(static_cast<size_t>(max_y) + 1, 0.0);
  for (const auto& s : data)
    for (int j = 0; j < s.y; ++j) tail[j] += 1.0;

  double alpha = std::log(sum_y / sum_c);
  double kappa = kappa_init;

  const auto solve_alpha = [&](double kap) {
    double lo = alpha - 50.0, hi = alpha + 50.0;
    for (int it = 0; it < 100; ++it) {
      double score = 0.0, info = 0.0;
      for (const auto& s : data) {
        const double mu = std::exp(alpha) * s.t * (s.g ? margin : 1.0);
        const double d = 1.0 + kap * mu;
        score += (s.y - mu) / d;
        info += mu / d;  // times dmu/deta / d == mu/d for the Fisher weight
      }
      if (score > 0.0) lo = std::max(lo, alpha); else hi = std::min(hi, alpha);
      fit.max_score = std::abs(score);
      if (std::abs(score) < tol) return true;
      double step = score / std::max(info, 1e-300);
      step = std::clamp(step, -2.0, 2.0);
      double cand = alpha + step;
      if (cand <= lo || cand >= hi) cand = 0.5 * (lo + hi);
      alpha = cand;
      ++fit.iterations;
    }
    return false;
  };

  const auto kappa_derivs = [&](double kap) {
    // dl/dkappa and -d2l/dkappa2 at the current alpha
    double s = 0.0, j = 0.0;
    if (kap <= 0.0) {
      for (const auto& d : data) {
        const double mu = std::exp(alpha) * d.t * (d.g ? margin : 1.0);
        s += 0.5 * ((d.y - mu) * (d.y - mu) - d.y);
      }
      return std::pair{s, 0.0};
    }
    const double a = 1.0 / kap;
    const double k2 = kap * kap, k3 = k2 * kap, k4 = k2 * k2;
    // shared digamma/trigamma sums via tail counts
    double dig_total = 0.0, trig_total = 0.0;
    for (int q = 0; q < max_y; ++q) {
      dig_total += tail[q] / (a + q);
      trig_total -= tail[q] / ((a + q) * (a + q));
    }
    s -= dig_total / k2;
    j -= 2.0 * dig_total / k3 + trig_total / k4;
    for (const auto& d : data) {
      const double mu = std::exp(alpha) * d.t * (d.g ? margin : 1.0);
      const double dd = 1.0 + kap * mu;
      s += std::log1p(kap * mu) / k2 + d.y / kap - (d.y + a) * mu / dd;
      j -= -2.0 * std::log1p(kap * mu) / k3 + 2.0 * mu / (k2 * dd) - d.y / k2 +
           (d.y + a) * mu * mu / (dd * dd);
    }
    return std::pair{s, j};
  };

  // pilot Poisson fit, then moment start for kappa if none supplied
  if (!solve_alpha(0.0)) return fit;
  if (kappa <= 0.0) {
    double num = 0.0, den = 0.0;
    for (const auto& s : data) {
      const double mu = std::exp(alpha) * s.t * (s.g ? margin : 1.0);
      num += (s.y - mu) * (s.y - mu) - mu;
      den += mu * mu;
    }
    kappa = std::clamp(num / std::max(den, 1e-300), 0.02, 50.0);
  }

  double u_lo = -std::numeric_limits<double>::infinity();
  double u_hi = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < 100; ++outer) {
    if (!solve_alpha(kappa)) return fit;
    auto [sk, jk] = kappa_derivs(kappa);
    const double su = kappa * sk;
    const double juu = kappa * kappa * jk - su;
    if (std::abs(su) < tol) {
      fit.converged = true;
      break;
    }
    const double u = std::log(kappa);
    if (su > 0.0) u_lo = std::max(u_lo, u); else u_hi = std::min(u_hi, u);
    double step = juu > 1e-12 ? su / juu : (su > 0.0 ? 0.5 : -0.5);
    step = std::clamp(step, -1.5, 1.5);
    double u_new = u + step;
    if (u_new <= u_lo || u_new >= u_hi) {
      if (std::isfinite(u_lo) && std::isfinite(u_hi)) u_new = 0.5 * (u_lo + u_hi);
    }
    if (u_new < std::log(1e-10)) {
      // boundary: accept kappa = 0 when the dispersion score points below it
      if (!solve_alpha(0.0)) return fit;
      auto [s0, j0] = kappa_derivs(0.0);
      (void)j0;
      if (s0 <= 0.0) {
        kappa = 0.0;
        fit.kappa_boundary = true;
        fit.converged = true;
        break;
      }
      u_new = std::log(1e-10);
    }
    if (u_new > std::log(1e6)) u_new = std::log(1e6);
    kappa = std::exp(u_new);
    ++fit.iterations;
  }
  fit.log_rate = alpha;
  fit.kappa = kappa;
  return fit;
}

double score_test_fast(std::span<const NbSubject> data, double margin,
                       const TwoGroupFit& fit) {
  if (!fit.converged)
    throw std::runtime_error("nb score test: restricted fit did not converge");
  double num = 0.0, d0 = 0.0, d1 = 0.0;
  for (const auto& s : data) {
    const double mu = std::exp(fit.log_rate) * s.t * (s.g ? margin : 1.0);
    const double w = mu / (1.0 + fit.kappa * mu);
    if (s.g) {
      num += (s.y - mu) / (1.0 + fit.kappa * mu);
      d1 += w;
    } else {
      d0 += w;
    }
  }
  if (!(d0 > 0.0) || !(d1 > 0.0))
    throw std::runtime_error("nb score test: degenerate arm");
  return num / std::sqrt(d0 * d1 / (d0 + d1));
}

double score_test(std::span<const NbSubject> data, double margin) {
  const std::vector<Observation> obs = to_observations(data);
  const Family f = Family::negbin(0.0);
  const RestrictedFit rf = fit_restricted(obs, f, std::log(margin));
  if (!rf.converged)
    throw std::runtime_error("nb score test: restricted fit did not converge");
  TwoGroupFit tg;
  tg.log_rate = rf.alpha_hat[0];
  tg.kappa = rf.kappa_hat;
  tg.converged = true;
  return score_test_fast(data, margin, tg);
}

double equal_followup_statistic(std::span<const NbSubject> data, double margin) {
  if (data.empty()) throw std::invalid_argument("equal_followup_statistic: no data");
  const double t = data[0].t;
  double sy1 = 0.0, sy0 = 0.0;
  long long n1 = 0, n0 = 0;
  for (const auto& s : data) {
    if (std::abs(s.t - t) > 1e-12 * std::max(1.0, t))
      throw std::invalid_argument("equal_followup_statistic: follow-up must be common");
    if (s.g) { sy1 += s.y; ++n1; } else { sy0 += s.y; ++n0; }
  }
  if (n1 == 0 || n0 == 0)
    throw std::invalid_argument("equal_followup_statistic: both arms required");
  const TwoGroupFit fit = fit_two_group_restricted(data, margin);
  if (!fit.converged)
    throw std::runtime_error("equal_followup_statistic: fit did not converge");
  const double mu0 = std::exp(fit.log_rate) * t;
  const double mu1 = margin * mu0;
  const double v = (mu1 + fit.kappa * mu1 * mu1) / n1 +
                   (mu0 + fit.kappa * mu0 * mu0) / n0;
  return (sy1 / n1 - margin * (sy0 / n0)) / std::sqrt(v);
}

RatioCi rate_ratio_confidence_interval(std::span<const NbSubject> data, double level) {
  const std::vector<Observation> obs = to_observations(data);
  RatioCi ci;
  ci.log_scale = score_confidence_interval(obs, Family::negbin(0.0), level);
  ci.ratio_lo = std::exp(ci.log_scale.lo);
  ci.ratio_hi = std::exp(ci.log_scale.hi);
  ci.ratio_hat = std::exp(ci.log_scale.beta_hat);
  return ci;
}

}  // namespace scorepower::nb
