#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "scorepower/logistic_design.hpp"
#include "scorepower/nb_design.hpp"

namespace scorepower::sim {

/// splitmix64 stream keyed by (seed, replicate index): the same pair yields
/// the same draws regardless of how replicates are scheduled across threads.
struct Stream {
  std::uint64_t state = 0;
  std::uint64_t next();
  double u01();          // in [0, 1)
  double normal();       // polar method
  double exponential(double rate);
  double gamma(double shape, double scale);  // Marsaglia-Tsang, boosted below 1
  long long poisson(double mean);            // inversion / PTRS rejection
};

Stream make_stream(std::uint64_t seed, std::uint64_t replicate);

struct SimControl {
  long long replications = 20000;
  std::uint64_t seed = 1;
  int threads = 0;  // 0: SCOREPOWER_THREADS env or hardware concurrency
  std::function<void(long long)> progress;  // completed replicates (throttled)
};

struct SimResult {
  long long replications = 0;
  long long rejections = 0;
  long long fit_failures = 0;
  double power_hat = 0.0;
  double mc_stderr = 0.0;
  bool unreliable = false;  // fit-failure fraction above 1%
};

/// One simulated trial: exponential dropout censored at tau, NB outcomes via
/// the Poisson-gamma mixture. Deterministic arm sizes n1 = round(n th/(1+th)).
std::vector<nb::NbSubject> simulate_nb_trial(const nb::NbTrialSpec& spec,
                                             long long n, Stream& rng);

/// One simulated stratified binary trial: multinomial cell membership,
/// Bernoulli outcomes, returned as per-stratum counts.
std::vector<logistic::StratumCounts> simulate_binary_trial(
    const logistic::LogisticScenario& scenario, double alpha0, long long n,
    Stream& rng);

/// Empirical power of the NB score test at total size n: rejects when
/// Z <= -z_{1-alpha/2} (lower rates beneficial). Non-convergent fits are
/// excluded from the denominator and counted.
SimResult empirical_power_nb(const nb::NbTrialSpec& spec, long long n,
                             const SimControl& control);

/// Empirical power of the stratified (Cochran) score test at total size n:
/// rejects when Z >= z_{1-alpha/2} (higher response beneficial); degenerate
/// tables count as fit failures.
SimResult empirical_power_binary(const logistic::LogisticScenario& scenario,
                                 double alpha, long long n,
                                 const SimControl& control);

int resolve_threads(int requested);

}  // namespace scorepower::sim
