#include "scorepower/simulator.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "scorepower/special.hpp"

namespace scorepower::sim {

namespace {

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Stream::next() {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  return mix64(z);
}

double Stream::u01() { return (next() >> 11) * 0x1.0p-53; }

double Stream::normal() {
  while (true) {
    const double u = 2.0 * u01() - 1.0;
    const double v = 2.0 * u01() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

double Stream::exponential(double rate) { return -std::log1p(-u01()) / rate; }

double Stream::gamma(double shape, double scale) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
  if (shape < 1.0) {
    // boost: Gamma(a) = Gamma(a+1) * U^{1/a}
    const double u = std::max(u01(), 0x1.0p-53);
    return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    const double x = normal();
    const double t = 1.0 + c * x;
    if (t <= 0.0) continue;
    const double v = t * t * t;
    const double u = u01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return scale * d * v;
  }
}

long long Stream::poisson(double mean) {
  if (!(mean >= 0.0)) throw std::invalid_argument("poisson: mean must be nonnegative");
  if (mean == 0.0) return 0;
  if (mean < 10.0) {
    // inversion by sequential search
    const double target = u01();
    double p = std::exp(-mean), cdf = p;
    long long k = 0;
    while (cdf < target && k < 2000) {
      ++k;
      p *= mean / k;
      cdf += p;
    }
    return k;
  }
  // transformed rejection with squeeze (PTRS)
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  while (true) {
    const double u = u01() - 0.5;
    const double v = u01();
    const double us = 0.5 - std::abs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<long long>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    const double k = kf;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        k * log_mean - mean - log_gamma(k + 1.0))
      return static_cast<long long>(kf);
  }
}

Stream make_stream(std::uint64_t seed, std::uint64_t replicate) {
  Stream s;
  s.state = mix64(seed + 0x9E3779B97F4A7C15ULL) ^
            mix64(replicate * 0xBF58476D1CE4E5B9ULL + 0x94D049BB133111EBULL);
  return s;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SCOREPOWER_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::vector<nb::NbSubject> simulate_nb_trial(const nb::NbTrialSpec& spec,
                                             long long n, Stream& rng) {
  const long long n1 =
      static_cast<long long>(std::floor(n * spec.theta / (1.0 + spec.theta) + 0.5));
  std::vector<nb::NbSubject> data(static_cast<size_t>(n));
  const double lambda1 = spec.rate_ratio * spec.lambda0;
  for (long long i = 0; i < n; ++i) {
    nb::NbSubject& s = data[static_cast<size_t>(i)];
    s.g = i < n1 ? 1 : 0;
    const double wc = s.g ? spec.dropout_treated.value_or(spec.dropout) : spec.dropout;
    if (wc > 0.0) {
      const double rate = -std::log1p(-wc) / spec.tau;
      s.t = std::min(rng.exponential(rate), spec.tau);
    } else {
      s.t = spec.tau;
    }
    const double frailty =
        spec.kappa > 0.0 ? rng.gamma(1.0 / spec.kappa, spec.kappa) : 1.0;
    s.y = static_cast<int>(rng.poisson(frailty * (s.g ? lambda1 : spec.lambda0) * s.t));
  }
  return data;
}

std::vector<logistic::StratumCounts> simulate_binary_trial(
    const logistic::LogisticScenario& sc, double alpha0, long long n,
    Stream& rng) {
  const size_t S = sc.pi_control.size();
  std::vector<logistic::StratumCounts> counts(S);
  std::vector<double> cdf(2 * S), prob(2 * S);
  double acc = 0.0;
  for (size_t s = 0; s < S; ++s) {
    acc += sc.pi_treated[s];
    cdf[2 * s] = acc;
    prob[2 * s] = 1.0 / (1.0 + std::exp(-(alpha0 + sc.stratum_log_or[s] +
                                          sc.treatment_log_or)));
    acc += sc.pi_control[s];
    cdf[2 * s + 1] = acc;
    prob[2 * s + 1] = 1.0 / (1.0 + std::exp(-(alpha0 + sc.stratum_log_or[s])));
  }
  for (long long i = 0; i < n; ++i) {
    const double u = rng.u01();
    size_t cell = 0;
    while (cell + 1 < cdf.size() && u >= cdf[cell]) ++cell;
    const size_t s = cell / 2;
    const bool treated = (cell % 2) == 0;
    const bool event = rng.u01() < prob[cell];
    if (treated) {
      ++counts[s].n1;
      counts[s].x1 += event;
    } else {
      ++counts[s].n0;
      counts[s].x0 += event;
    }
  }
  return counts;
}

namespace {

// Shared replicate loop: `one_rep` returns +1 reject, 0 accept, -1 failure.
template <typename OneRep>
SimResult run_replicates(const SimControl& control, OneRep&& one_rep) {
  if (control.replications < 1)
    throw std::invalid_argument("empirical_power: replications must be >= 1");
  const int threads = resolve_threads(control.threads);
  std::atomic<long long> rejections{0}, failures{0}, completed{0};
  std::mutex progress_mutex;
  const long long reps = control.replications;
  auto worker = [&](long long lo, long long hi) {
    long long local_rej = 0, local_fail = 0, local_done = 0;
    for (long long r = lo; r < hi; ++r) {
      Stream rng = make_stream(control.seed, static_cast<std::uint64_t>(r));
      const int verdict = one_rep(rng);
      if (verdict < 0) ++local_fail;
      else local_rej += verdict;
      if (++local_done % 1024 == 0 && control.progress) {
        const long long done = completed.fetch_add(local_done) + local_done;
        local_done = 0;
        std::lock_guard<std::mutex> lock(progress_mutex);
        control.progress(done);
      }
    }
    completed.fetch_add(local_done);
    rejections.fetch_add(local_rej);
    failures.fetch_add(local_fail);
  };
  if (threads <= 1) {
    worker(0, reps);
  } else {
    std::vector<std::thread> pool;
    const long long chunk = (reps + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const long long lo = t * chunk;
      const long long hi = std::min(reps, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(worker, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  SimResult res;
  res.replications = reps;
  res.rejections = rejections.load();
  res.fit_failures = failures.load();
  const long long effective = reps - res.fit_failures;
  res.power_hat = effective > 0 ? static_cast<double>(res.rejections) / effective : 0.0;
  res.mc_stderr = effective > 0
                      ? std::sqrt(res.power_hat * (1.0 - res.power_hat) / effective)
                      : 0.0;
  res.unreliable = res.fit_failures > reps / 100;
  if (control.progress) control.progress(reps);
  return res;
}

}  // namespace

SimResult empirical_power_nb(const nb::NbTrialSpec& spec, long long n,
                             const SimControl& control) {
  if (n < 2) throw std::invalid_argument("empirical_power_nb: n must be >= 2");
  if (!(spec.lambda0 > 0.0) || !(spec.rate_ratio > 0.0) || spec.kappa < 0.0 ||
      spec.margin < 1.0 || !(spec.tau > 0.0) || spec.dropout < 0.0 ||
      spec.dropout >= 1.0)
    throw std::invalid_argument("empirical_power_nb: invalid scenario");
  const double zcrit = normal_quantile(1.0 - spec.alpha / 2.0);
  return run_replicates(control, [&](Stream& rng) -> int {
    const std::vector<nb::NbSubject> data = simulate_nb_trial(spec, n, rng);
    const nb::TwoGroupFit fit =
        nb::fit_two_group_restricted(data, spec.margin, spec.kappa);
    if (!fit.converged) return -1;
    double z;
    try {
      z = nb::score_test_fast(data, spec.margin, fit);
    } catch (const std::exception&) {
      return -1;
    }
    return z <= -zcrit ? 1 : 0;
  });
}

SimResult empirical_power_binary(const logistic::LogisticScenario& sc,
                                 double alpha, long long n,
                                 const SimControl& control) {
  if (n < 2) throw std::invalid_argument("empirical_power_binary: n must be >= 2");
  const double alpha0 = solve_alpha0(sc);
  const double zcrit = normal_quantile(1.0 - alpha / 2.0);
  return run_replicates(control, [&](Stream& rng) -> int {
    const std::vector<logistic::StratumCounts> table =
        simulate_binary_trial(sc, alpha0, n, rng);
    double num = 0.0, den = 0.0;
    for (const auto& c : table) {
      if (c.n1 <= 0 || c.n0 <= 0) continue;  // empty arm: stratum carries no test info
      const double ns = static_cast<double>(c.n1 + c.n0);
      const double w = c.n1 * c.n0 / ns;
      const double pbar = static_cast<double>(c.x1 + c.x0) / ns;
      num += w * (static_cast<double>(c.x1) / c.n1 - static_cast<double>(c.x0) / c.n0);
      den += w * pbar * (1.0 - pbar);
    }
    if (!(den > 0.0)) return -1;
    return num / std::sqrt(den) >= zcrit ? 1 : 0;
  });
}

}  // namespace scorepower::sim
