#include "scorepower/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "scorepower/special.hpp"

namespace scorepower {

namespace {

constexpr double kEtaCap = 690.0;  // exp() overflow guard on the log scale

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct EtaDerivs {
  double resid;   // dl/deta
  double fisher;  // E[-d2l/deta2] under the model at (mu, kappa)
  double jee;     // -d2l/deta2 at the observed y
};

EtaDerivs eta_derivs(const Family& f, int y, double mu) {
  switch (f.kind) {
    case FamilyKind::bernoulli_logit: {
      const double v = mu * (1.0 - mu);
      return {y - mu, v, v};
    }
    case FamilyKind::poisson_log:
      return {y - mu, mu, mu};
    case FamilyKind::negbin_log: {
      const double k = f.dispersion;
      const double d = 1.0 + k * mu;
      return {(y - mu) / d, mu / d, mu * (1.0 + k * y) / (d * d)};
    }
  }
  throw std::logic_error("eta_derivs: unknown family");
}

// dl/dkappa for the negative binomial; exact kappa -> 0 limit included.
double kappa_score(int y, double mu, double kappa, double dig) {
  if (kappa <= 0.0) return 0.5 * ((y - mu) * (y - mu) - y);
  const double k2 = kappa * kappa;
  const double d = 1.0 + kappa * mu;
  return -dig / k2 + std::log1p(kappa * mu) / k2 + y / kappa -
         (y + 1.0 / kappa) * mu / d;
}

// -d2l/dkappa2 for the negative binomial (observed information entry).
double kappa_obs_info(int y, double mu, double kappa, double dig, double trig) {
  if (kappa <= 0.0) {
    // series limit at kappa = 0
    return static_cast<double>(y) * (y - 1.0) * (2.0 * y - 1.0) / 6.0 +
           2.0 * mu * mu * mu / 3.0 - y * mu * mu;
  }
  const double k2 = kappa * kappa;
  const double k3 = k2 * kappa;
  const double k4 = k2 * k2;
  const double d = 1.0 + kappa * mu;
  const double d2l = 2.0 * dig / k3 + trig / k4 - 2.0 * std::log1p(kappa * mu) / k3 +
                     2.0 * mu / (k2 * d) - y / k2 + (y + 1.0 / kappa) * mu * mu / (d * d);
  return -d2l;
}

// -d2l/(deta dkappa) for the negative binomial.
double cross_obs_info(int y, double mu, double kappa) {
  const double d = 1.0 + kappa * mu;
  return (y - mu) * mu / (d * d);
}

void check_support(const Family& f, int y) {
  if (y < 0) throw std::domain_error("log_pmf: negative outcome");
  if (f.kind == FamilyKind::bernoulli_logit && y > 1)
    throw std::domain_error("log_pmf: Bernoulli outcome must be 0 or 1");
}

// ---------------------------------------------------------------------------
// Weighted maximum-likelihood fitter. Fits the coefficients of `columns`
// (either the nuisance covariates alone, with beta0*x folded into the offset,
// or [x, z] jointly for the unrestricted fit), profiling the NB dispersion.
// ---------------------------------------------------------------------------

struct InternalFit {
  Eigen::VectorXd coef;
  double kappa = 0.0;
  bool kappa_boundary = false;
  bool converged = false;
  int iterations = 0;
  double max_score = std::numeric_limits<double>::infinity();
  double loglik = -std::numeric_limits<double>::infinity();
};

class Fitter {
 public:
  Fitter(std::span<const Observation> data, const Family& f, bool free_beta,
         double beta0, const FitOptions& opts)
      : data_(data), family_(f), free_beta_(free_beta), beta0_(beta0), opts_(opts) {
    if (data.empty()) throw std::invalid_argument("fit: empty dataset");
    dim_ = static_cast<int>(data[0].z.size()) + (free_beta ? 1 : 0);
    double total = 0.0;
    max_y_ = 0;
    for (const auto& o : data) {
      if (o.weight < 0.0) throw std::invalid_argument("fit: negative weight");
      check_support(f, o.y);
      total += o.weight;
      max_y_ = std::max(max_y_, o.y);
    }
    if (!(total > 0.0)) throw std::invalid_argument("fit: total weight must be positive");
    scale_ = std::max(1.0, total);
    dig_.resize(max_y_ + 1);
    trig_.resize(max_y_ + 1);
  }

  InternalFit run() {
    InternalFit fit;
    fit.coef = Eigen::VectorXd::Zero(dim_);
    start_values(fit.coef);
    if (family_.kind != FamilyKind::negbin_log) {
      kappa_ = 0.0;
      irls(fit);
      fit.kappa = 0.0;
      return fit;
    }
    kappa_ = opts_.kappa_init > 0.0 ? opts_.kappa_init : family_.dispersion;
    irls(fit);  // Poisson-weight pilot when kappa_ == 0
    if (kappa_ <= 0.0) kappa_ = moment_kappa(fit.coef);
    profile_kappa(fit);
    fit.kappa = kappa_;
    return fit;
  }

 private:
  void start_values(Eigen::VectorXd& coef) const {
    // crude but safe: intercept-level start at the weighted mean outcome
    double sy = 0.0, sw = 0.0;
    for (const auto& o : data_) { sy += o.weight * o.y; sw += o.weight; }
    const double ybar = std::max(sy / sw, 1e-8);
    double eta0;
    if (family_.kind == FamilyKind::bernoulli_logit)
      eta0 = std::log(std::clamp(ybar, 1e-8, 1.0 - 1e-8) / (1.0 - std::clamp(ybar, 1e-8, 1.0 - 1e-8)));
    else
      eta0 = std::log(ybar);
    // assign to the first column that looks like an intercept; otherwise leave 0
    const int off = free_beta_ ? 1 : 0;
    const auto& z0 = data_[0].z;
    for (int j = 0; j < z0.size(); ++j) {
      if (z0[j] == 1.0) { coef[off + j] = eta0; break; }
    }
  }

  double column(const Observation& o, int j) const {
    if (free_beta_) return j == 0 ? o.x : o.z[j - 1];
    return o.z[j];
  }

  double base_offset(const Observation& o) const {
    return o.offset + (free_beta_ ? 0.0 : beta0_ * o.x);
  }

  double eta_of(const Observation& o, const Eigen::VectorXd& coef) const {
    double eta = base_offset(o);
    if (free_beta_) {
      eta += coef[0] * o.x;
      for (int j = 1; j < dim_; ++j) eta += coef[j] * o.z[j - 1];
    } else {
      for (int j = 0; j < dim_; ++j) eta += coef[j] * o.z[j];
    }
    return std::min(eta, kEtaCap);
  }

  double mu_of(const Observation& o, const Eigen::VectorXd& coef) const {
    const double eta = eta_of(o, coef);
    if (family_.kind == FamilyKind::bernoulli_logit)
      return std::clamp(expit(eta), 1e-16, 1.0 - 1e-16);
    return std::max(std::exp(eta), 1e-300);
  }

  Family at_kappa() const {
    Family f = family_;
    f.dispersion = kappa_;
    return f;
  }

  double loglik_at(const Eigen::VectorXd& coef, double kappa) const {
    Family f = family_;
    f.dispersion = kappa;
    double ll = 0.0;
    for (const auto& o : data_) {
      if (o.weight == 0.0) continue;
      ll += o.weight * log_pmf(f, o.y, mu_of(o, coef));
    }
    return ll;
  }

  double moment_kappa(const Eigen::VectorXd& coef) const {
    double num = 0.0, den = 0.0;
    for (const auto& o : data_) {
      const double mu = mu_of(o, coef);
      num += o.weight * ((o.y - mu) * (o.y - mu) - mu);
      den += o.weight * mu * mu;
    }
    return std::clamp(num / std::max(den, 1e-300), 0.05, 50.0);
  }

  // Fisher scoring on the linear coefficients at fixed kappa_.
  void irls(InternalFit& fit) {
    const Family f = at_kappa();
    fit.converged = false;
    Eigen::VectorXd score(dim_);
    Eigen::MatrixXd hess(dim_, dim_);
    double last_step = std::numeric_limits<double>::infinity();
    double ll = loglik_at(fit.coef, kappa_);
    for (int it = 0; it < opts_.max_iterations; ++it) {
      score.setZero();
      hess.setZero();
      for (const auto& o : data_) {
        if (o.weight == 0.0) continue;
        const double mu = mu_of(o, fit.coef);
        const EtaDerivs d = eta_derivs(f, o.y, mu);
        for (int j = 0; j < dim_; ++j) {
          const double cj = column(o, j);
          score[j] += o.weight * cj * d.resid;
          for (int l = 0; l <= j; ++l)
            hess(j, l) += o.weight * d.fisher * cj * column(o, l);
        }
      }
      hess = hess.selfadjointView<Eigen::Lower>();
      const double smax = score.lpNorm<Eigen::Infinity>();
      fit.max_score = smax;
      ++fit.iterations;
      if (smax < opts_.score_tol * scale_ && last_step < opts_.step_tol) {
        fit.converged = true;
        break;
      }
      Eigen::VectorXd step = hess.ldlt().solve(score);
      if (!step.allFinite() ||
          (hess * step - score).norm() > 1e-6 * (1.0 + score.norm()))
        throw std::runtime_error("fit: rank-deficient design matrix");
      double t = 1.0;
      for (int h = 0; h < 50; ++h) {
        const Eigen::VectorXd cand = fit.coef + t * step;
        const double llc = loglik_at(cand, kappa_);
        if (llc + 1e-12 >= ll || !std::isfinite(ll)) {
          fit.coef = cand;
          ll = llc;
          break;
        }
        t *= 0.5;
      }
      last_step = t * step.lpNorm<Eigen::Infinity>();
      if (fit.coef.lpNorm<Eigen::Infinity>() > 60.0) break;  // separation guard
    }
    fit.loglik = ll;
  }

  void fill_tables(double kappa) {
    const double a = 1.0 / kappa;
    dig_[0] = 0.0;
    trig_[0] = 0.0;
    for (int y = 1; y <= max_y_; ++y) {
      const double u = a + (y - 1);
      dig_[y] = dig_[y - 1] + 1.0 / u;
      trig_[y] = trig_[y - 1] - 1.0 / (u * u);
    }
  }

  // weighted dl/dkappa and -d2l/dkappa2 at fixed coefficients
  std::pair<double, double> kappa_derivs(const Eigen::VectorXd& coef, double kappa) {
    fill_tables(kappa);
    double s = 0.0, j = 0.0;
    for (const auto& o : data_) {
      if (o.weight == 0.0) continue;
      const double mu = mu_of(o, coef);
      s += o.weight * kappa_score(o.y, mu, kappa, dig_[o.y]);
      j += o.weight * kappa_obs_info(o.y, mu, kappa, dig_[o.y], trig_[o.y]);
    }
    return {s, j};
  }

  double kappa_score_at_zero(const Eigen::VectorXd& coef) const {
    double s = 0.0;
    for (const auto& o : data_)
      if (o.weight != 0.0) {
        const double mu = mu_of(o, coef);
        s += o.weight * 0.5 * ((o.y - mu) * (o.y - mu) - o.y);
      }
    return s;
  }

  // Alternates IRLS on the coefficients with safeguarded Newton steps on
  // log kappa; an explicit kappa = 0 (Poisson-variance) boundary candidate is
  // compared whenever the search drives kappa to the floor.
  void profile_kappa(InternalFit& fit) {
    irls(fit);
    for (int outer = 0; outer < opts_.max_iterations; ++outer) {
      const bool alpha_ok = fit.converged;
      const double alpha_resid = fit.max_score;
      auto [sk, jk] = kappa_derivs(fit.coef, kappa_);
      const double su = kappa_ * sk;                 // d loglik / d log kappa
      const double juu = kappa_ * kappa_ * jk - su;  // observed info, log scale
      fit.max_score = std::max(alpha_resid, std::abs(su));
      if (std::abs(su) < opts_.score_tol * scale_ && alpha_ok) {
        fit.converged = true;
        return;
      }
      double delta = juu > 1e-12 ? su / juu : (su > 0.0 ? 0.5 : -0.5);
      delta = std::clamp(delta, -1.5, 1.5);
      const double u = std::log(kappa_);
      double t = 1.0;
      double kappa_new = kappa_;
      for (int h = 0; h < 50; ++h) {
        kappa_new = std::exp(u + t * delta);
        if (loglik_at(fit.coef, kappa_new) + 1e-13 >= fit.loglik) break;
        t *= 0.5;
      }
      if (kappa_new <= opts_.kappa_floor) {
        if (try_boundary(fit)) return;
        kappa_new = opts_.kappa_floor;
      }
      kappa_ = kappa_new;
      ++fit.iterations;
      irls(fit);
    }
    fit.converged = false;
  }

  // Returns true if kappa = 0 is the boundary optimum.
  bool try_boundary(InternalFit& fit) {
    const double kappa_save = kappa_;
    InternalFit cand = fit;
    cand.converged = false;
    kappa_ = 0.0;
    irls(cand);
    const double s0 = kappa_score_at_zero(cand.coef);
    if (s0 <= 0.0 && cand.loglik + 1e-12 >= fit.loglik) {
      fit = cand;
      fit.kappa_boundary = true;
      kappa_ = 0.0;
      return true;
    }
    kappa_ = kappa_save;
    return false;
  }

  std::span<const Observation> data_;
  Family family_;
  bool free_beta_;
  double beta0_;
  FitOptions opts_;
  int dim_ = 0;
  int max_y_ = 0;
  double scale_ = 1.0;
  double kappa_ = 0.0;
  std::vector<double> dig_, trig_;
};

}  // namespace

double mean_from_linear(const Family& f, double eta) {
  eta = std::min(eta, kEtaCap);
  return f.kind == FamilyKind::bernoulli_logit ? expit(eta) : std::exp(eta);
}

double log_pmf(const Family& f, int y, double mu) {
  if (!std::isfinite(mu)) throw std::domain_error("log_pmf: mean must be finite");
  check_support(f, y);
  switch (f.kind) {
    case FamilyKind::bernoulli_logit:
      if (!(mu > 0.0 && mu < 1.0))
        throw std::domain_error("log_pmf: Bernoulli mean must be in (0,1)");
      return y ? std::log(mu) : std::log1p(-mu);
    case FamilyKind::poisson_log:
    case FamilyKind::negbin_log: {
      if (!(mu > 0.0)) throw std::domain_error("log_pmf: mean must be positive");
      const double k = f.kind == FamilyKind::negbin_log ? f.dispersion : 0.0;
      if (k <= 0.0)
        return y * std::log(mu) - mu - log_gamma(y + 1.0);
      const double a = 1.0 / k;
      double ll = log_gamma(y + a) - log_gamma(a) - log_gamma(y + 1.0) -
                  (y + a) * std::log1p(k * mu);
      if (y > 0) ll += y * std::log(k * mu);
      return ll;
    }
  }
  throw std::logic_error("log_pmf: unknown family");
}

Eigen::VectorXd score_contribution(const Family& f, const Observation& obs,
                                   double beta, const Eigen::VectorXd& alpha) {
  const int p = static_cast<int>(alpha.size());
  const int d = 1 + p + (f.has_dispersion() ? 1 : 0);
  const double eta = std::min(beta * obs.x + alpha.dot(obs.z) + obs.offset, kEtaCap);
  const double mu = mean_from_linear(f, eta);
  const EtaDerivs ed = eta_derivs(f, obs.y, mu);
  Eigen::VectorXd s(d);
  s[0] = obs.x * ed.resid;
  s.segment(1, p) = obs.z * ed.resid;
  if (f.has_dispersion())
    s[d - 1] = kappa_score(obs.y, mu, f.dispersion,
                           digamma_diff(obs.y, 1.0 / std::max(f.dispersion, 1e-300)));
  return s;
}

Eigen::MatrixXd observed_info(const Family& f, const Observation& obs,
                              double beta, const Eigen::VectorXd& alpha) {
  const int p = static_cast<int>(alpha.size());
  const int d = 1 + p + (f.has_dispersion() ? 1 : 0);
  const double eta = std::min(beta * obs.x + alpha.dot(obs.z) + obs.offset, kEtaCap);
  const double mu = mean_from_linear(f, eta);
  const EtaDerivs ed = eta_derivs(f, obs.y, mu);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  m(0, 0) = obs.x * obs.x * ed.jee;
  m.block(1, 0, p, 1) = obs.z * (obs.x * ed.jee);
  m.block(1, 1, p, p) = (obs.z * obs.z.transpose()) * ed.jee;
  if (f.has_dispersion()) {
    const double a = 1.0 / std::max(f.dispersion, 1e-300);
    const double jek = cross_obs_info(obs.y, mu, f.dispersion);
    m(d - 1, 0) = obs.x * jek;
    m.block(d - 1, 1, 1, p) = obs.z.transpose() * jek;
    m(d - 1, d - 1) = kappa_obs_info(obs.y, mu, f.dispersion,
                                     digamma_diff(obs.y, a), trigamma_diff(obs.y, a));
  }
  m = m.selfadjointView<Eigen::Lower>();
  return m;
}

InfoPair info_contributions(const Family& fitted, const Observation& obs,
                            double beta, const Eigen::VectorXd& alpha,
                            const Family& truth, double true_mu,
                            int support_levels) {
  const int p = static_cast<int>(alpha.size());
  const int d = 1 + p + (fitted.has_dispersion() ? 1 : 0);
  const double eta = std::min(beta * obs.x + alpha.dot(obs.z) + obs.offset, kEtaCap);
  const double fitted_mu = mean_from_linear(fitted, eta);
  InfoPair out{Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d)};
  Observation probe = obs;
  const int levels = fitted.kind == FamilyKind::bernoulli_logit ? 2 : support_levels;
  for (int y = 0; y < levels; ++y) {
    probe.y = y;
    const Eigen::MatrixXd j = observed_info(fitted, probe, beta, alpha);
    out.observed_expectation += std::exp(log_pmf(truth, y, true_mu)) * j;
    out.fisher += std::exp(log_pmf(fitted, y, fitted_mu)) * j;
  }
  return out;
}

double log_likelihood(std::span<const Observation> data, const Family& f,
                      double beta, const Eigen::VectorXd& alpha) {
  double ll = 0.0;
  for (const auto& o : data) {
    if (o.weight == 0.0) continue;
    const double eta = beta * o.x + alpha.dot(o.z) + o.offset;
    ll += o.weight * log_pmf(f, o.y, mean_from_linear(f, eta));
  }
  return ll;
}

RestrictedFit fit_restricted(std::span<const Observation> data, const Family& f,
                             double beta0, const FitOptions& opts) {
  Fitter fitter(data, f, /*free_beta=*/false, beta0, opts);
  const InternalFit inner = fitter.run();
  RestrictedFit fit;
  fit.alpha_hat = inner.coef;
  fit.kappa_hat = inner.kappa;
  fit.beta0 = beta0;
  fit.has_dispersion = f.has_dispersion();
  fit.kappa_at_boundary = inner.kappa_boundary;
  fit.converged = inner.converged;
  fit.iterations = inner.iterations;
  fit.max_score_residual = inner.max_score;
  fit.log_likelihood = inner.loglik;
  return fit;
}

double score_statistic(std::span<const Observation> data, const Family& f,
                       double beta0, const FitOptions& opts) {
  const RestrictedFit fit = fit_restricted(data, f, beta0, opts);
  if (!fit.converged)
    throw std::runtime_error("score_statistic: restricted fit did not converge");
  Family fhat = f;
  fhat.dispersion = fit.kappa_hat;
  const int p = static_cast<int>(fit.alpha_hat.size());
  double s_beta = 0.0, i_bb = 0.0;
  Eigen::VectorXd i_ba = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd i_aa = Eigen::MatrixXd::Zero(p, p);
  for (const auto& o : data) {
    if (o.weight == 0.0) continue;
    const double eta = beta0 * o.x + fit.alpha_hat.dot(o.z) + o.offset;
    const double mu = mean_from_linear(fhat, eta);
    const EtaDerivs d = eta_derivs(fhat, o.y, mu);
    s_beta += o.weight * o.x * d.resid;
    i_bb += o.weight * o.x * o.x * d.fisher;
    i_ba += o.weight * o.x * d.fisher * o.z;
    i_aa += o.weight * d.fisher * (o.z * o.z.transpose());
  }
  // The dispersion row of the expected information is orthogonal to
  // (beta, alpha) for the NB log link, so the Schur complement over alpha
  // alone is the full V_n.
  const double v = i_bb - i_ba.dot(i_aa.ldlt().solve(i_ba));
  if (!(v > 0.0))
    throw std::runtime_error("score_statistic: nonpositive variance (degenerate data)");
  return s_beta / std::sqrt(v);
}

double unrestricted_beta(std::span<const Observation> data, const Family& f,
                         const FitOptions& opts) {
  Fitter fitter(data, f, /*free_beta=*/true, 0.0, opts);
  return fitter.run().coef[0];
}

ScoreCi score_confidence_interval(std::span<const Observation> data,
                                  const Family& f, double level,
                                  const FitOptions& opts) {
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("score_confidence_interval: level must be in (0,1)");
  ScoreCi ci;
  ci.beta_hat = std::clamp(unrestricted_beta(data, f, opts), -30.0, 30.0);
  const double zcrit = normal_quantile(0.5 * (1.0 + level));
  const auto excess = [&](double b) {
    return std::abs(score_statistic(data, f, b, opts)) - zcrit;
  };
  for (int side = 0; side < 2; ++side) {
    const double dir = side == 0 ? -1.0 : 1.0;
    double inner = ci.beta_hat;
    double h = 0.5;
    bool bracketed = false;
    double outer = inner;
    for (int i = 0; i < 60; ++i) {
      outer = ci.beta_hat + dir * h;
      if (excess(outer) > 0.0) { bracketed = true; break; }
      inner = outer;
      h *= 2.0;
    }
    if (!bracketed) {
      (side == 0 ? ci.lo : ci.hi) = outer;
      (side == 0 ? ci.lo_open : ci.hi_open) = true;
      continue;
    }
    while (std::abs(outer - inner) > 1e-8) {
      const double mid = 0.5 * (inner + outer);
      if (excess(mid) > 0.0) outer = mid; else inner = mid;
    }
    (side == 0 ? ci.lo : ci.hi) = 0.5 * (inner + outer);
  }
  return ci;
}

}  // namespace scorepower
