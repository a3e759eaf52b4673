#pragma once

#include <Eigen/Core>

namespace scorepower {

enum class FamilyKind { bernoulli_logit, negbin_log, poisson_log };

/// Exponential-family spec with canonical link. For the negative binomial the
/// dispersion kappa gives Var(Y) = mu + kappa*mu^2; kappa = 0 degenerates to
/// the Poisson mean-variance.
struct Family {
  FamilyKind kind = FamilyKind::poisson_log;
  double dispersion = 0.0;  // kappa, negbin only

  static Family bernoulli() { return {FamilyKind::bernoulli_logit, 0.0}; }
  static Family negbin(double kappa) { return {FamilyKind::negbin_log, kappa}; }
  static Family poisson() { return {FamilyKind::poisson_log, 0.0}; }

  bool is_count() const { return kind != FamilyKind::bernoulli_logit; }
  /// Whether a dispersion parameter is part of the model (fitted or fixed).
  bool has_dispersion() const { return kind == FamilyKind::negbin_log; }
};

/// One (possibly weighted) record: binary treatment x, nuisance covariates z
/// (including the intercept), additive offset on the linear predictor, and a
/// nonnegative integer outcome.
struct Observation {
  double x = 0.0;
  Eigen::VectorXd z;
  double offset = 0.0;
  int y = 0;
  double weight = 1.0;
};

/// Inverse link: mean from linear predictor.
double mean_from_linear(const Family& f, double eta);

}  // namespace scorepower
