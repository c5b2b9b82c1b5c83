#pragma once

#include <cstdint>
#include <functional>
#include <map>

#include "dhglm/model_spec.hpp"
#include "dhglm/rng.hpp"

namespace dhglm {

struct McmcConfig {
  int burn_in = 2000;
  int iterations = 20000;  // post burn-in
  int thin = 20;
  double coef_step = 0.1;
  double effect_step = 0.5;
  double log_precision_step = 0.5;
  std::uint64_t seed = 1;
  bool store_random_effects = false;
  bool adapt_during_burn_in = true;  // step tuning happens only before sampling
};

struct McmcChain {
  std::map<std::string, VectorXd> draws;       // thinned post burn-in draws
  std::map<std::string, double> acceptance;    // post burn-in acceptance rates
  int kept = 0;

  const VectorXd& chain(const std::string& name) const {
    auto it = draws.find(name);
    if (it == draws.end()) throw dhglm_error("mcmc: no chain named '" + name + "'");
    return it->second;
  }
};

struct McmcParamSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, lo = 0.0, hi = 0.0;  // 95% equal-tail interval
};

// Metropolis-within-Gibbs on the joint DHGLM posterior: single-site Gaussian
// random walks on every coefficient and random effect, and log-scale walks
// (with the Jacobian) on free precisions. Serves as the reference answer the
// importance-sampling path is validated against.
McmcChain run_mcmc(const DhglmSpec& spec, const Dataset& data, const McmcConfig& config);

std::vector<McmcParamSummary> chain_summary(const McmcChain& chain);

// Scalar random-walk Metropolis on an arbitrary log density; exposed for
// distributional smoke tests of the sampler machinery.
VectorXd random_walk_chain(const std::function<double(double)>& log_density, double init,
                           double step, int burn_in, int iterations, int thin, Rng& rng);

}  // namespace dhglm
