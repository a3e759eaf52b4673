#include "scorepower/exemplary.hpp"

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "scorepower/glm.hpp"

namespace scorepower {

double FollowupGrid::mean_time() const {
  double s = 0.0;
  for (const auto& a : atoms) s += a.time * a.prob;
  return s;
}

FollowupGrid discretize_followup(double dropout, double tau, int levels) {
  if (!(tau > 0.0)) throw std::invalid_argument("discretize_followup: tau must be positive");
  if (dropout < 0.0 || dropout >= 1.0)
    throw std::invalid_argument("discretize_followup: dropout must be in [0,1)");
  if (levels < 2) throw std::invalid_argument("discretize_followup: levels must be >= 2");
  FollowupGrid grid;
  if (dropout == 0.0) {
    grid.atoms.push_back({tau, 1.0});
    return grid;
  }
  const double rate = -std::log1p(-dropout) / tau;  // G(tau) = dropout
  grid.atoms.reserve(levels);
  grid.atoms.push_back({tau, 1.0 - dropout});
  const double mass = dropout / (levels - 1);
  for (int l = 1; l < levels; ++l) {
    const double q = dropout * (l - 0.5) / (levels - 1);
    grid.atoms.push_back({-std::log1p(-q) / rate, mass});
  }
  return grid;
}

int outcome_truncation(const Family& f, double max_mu, double tail_tol, int cap) {
  if (!(tail_tol > 0.0)) throw std::invalid_argument("outcome_truncation: tol must be positive");
  if (f.kind == FamilyKind::bernoulli_logit) return 2;
  if (!(max_mu > 0.0)) throw std::invalid_argument("outcome_truncation: mean must be positive");
  double cum = 0.0;
  for (int y = 0; y < cap; ++y) {
    cum += std::exp(log_pmf(f, y, max_mu));
    if (1.0 - cum < tail_tol) return y + 1;
  }
  std::ostringstream msg;
  msg << "outcome_truncation: tail mass " << (1.0 - cum) << " at cap " << cap
      << " exceeds tolerance " << tail_tol;
  throw std::runtime_error(msg.str());
}

double ExemplaryDataset::total_weight() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.weight;
  return s;
}

ExemplaryDataset build_exemplary(std::vector<CovariateConfig> configs,
                                 const Family& f, double beta_true,
                                 const Eigen::VectorXd& alpha_true, int levels) {
  if (configs.empty()) throw std::invalid_argument("build_exemplary: no configurations");
  const int J = f.kind == FamilyKind::bernoulli_logit ? 2 : levels;
  if (J < 1) throw std::invalid_argument("build_exemplary: levels must be >= 1");
  ExemplaryDataset ds;
  ds.family = f;
  ds.m = static_cast<int>(configs.size());
  ds.levels = J;
  ds.rows.reserve(static_cast<size_t>(ds.m) * J);
  for (const auto& cfg : configs) {
    const double eta = beta_true * cfg.x + alpha_true.dot(cfg.z) + cfg.offset_base;
    const double mu = mean_from_linear(f, eta);
    for (int y = 0; y < J; ++y) {
      Observation o;
      o.x = cfg.x;
      o.z = cfg.z;
      o.offset = cfg.offset_base;
      o.y = y;
      o.weight = cfg.pi * std::exp(log_pmf(f, y, mu));
      ds.rows.push_back(std::move(o));
    }
  }
  ds.configs = std::move(configs);
  return ds;
}

void write_csv(const ExemplaryDataset& ds, std::ostream& os) {
  const int p = ds.rows.empty() ? 0 : static_cast<int>(ds.rows[0].z.size());
  os << "x";
  for (int j = 0; j < p; ++j) os << ",z" << (j + 1);
  os << ",offset,y,weight\n";
  os.precision(17);
  for (const auto& r : ds.rows) {
    os << r.x;
    for (int j = 0; j < p; ++j) os << "," << r.z[j];
    os << "," << r.offset << "," << r.y << "," << r.weight << "\n";
  }
}

}  // namespace scorepower
