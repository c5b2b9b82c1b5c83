#pragma once

#include <cstdint>

#include "dhglm/conditional.hpp"
#include "dhglm/rng.hpp"

namespace dhglm {

enum class ProposalFamily { Gaussian, StudentT };

// Importance sampling distribution for theta_c on the sampling scale.
struct ProposalState {
  ProposalFamily family = ProposalFamily::Gaussian;
  double df = 3.0;  // Student-t only
  VectorXd mean;
  MatrixXd cov;

  struct Stage {
    VectorXd mean;
    MatrixXd cov;
    int sample_count = 0;
  };
  std::vector<Stage> history;  // one entry per completed adaptation stage
  bool low_ess_warning = false;

  int dim() const { return (int)mean.size(); }
  double log_density(const VectorXd& x) const;
  VectorXd sample(Rng& rng) const;

 private:
  friend ProposalState make_proposal(ProposalFamily, VectorXd, MatrixXd, double);
  friend ProposalState adapt_proposal(const struct WeightedEnsemble&, const ProposalState&);
  void factorize();
  MatrixXd chol_;       // lower Cholesky of cov
  double log_norm_ = 0; // density normalization constant
};

ProposalState make_proposal(ProposalFamily family, VectorXd mean, MatrixXd cov, double df = 3.0);

struct StageLog {
  int stage = 0;             // 0 = initial step
  int samples_in_stage = 0;
  int total_samples = 0;
  double ess = 0.0;
  VectorXd proposal_mean;
  MatrixXd proposal_cov;
  double log_target_at_mean = std::numeric_limits<double>::quiet_NaN();
};

struct WeightedEnsemble {
  MatrixXd samples;      // M x dim, sampling scale
  VectorXd log_targets;  // log pi(D|theta) + log pi(theta)
  VectorXd log_weights;  // unnormalized log importance weights
  VectorXd weights;      // normalized, sum to one
  std::vector<ConditionalFit> fits;  // empty when keep_fits is off
  double ess = 0.0;
  std::vector<int> stage_sizes;
  std::vector<StageLog> stage_logs;

  Eigen::Index size() const { return samples.rows(); }
};

struct AmisConfig {
  int n_initial = 5000;   // N0
  int n_stages = 10;      // T adaptive stages
  int n_per_stage = 1000; // Nt
  ProposalFamily family = ProposalFamily::Gaussian;
  double df = 3.0;
  VectorXd init_mean;
  MatrixXd init_cov;
  std::uint64_t seed = 1;
  int workers = 1;
  bool keep_fits = true;
  bool monitor_target_at_mean = true;  // one extra fit per stage
};

// Adaptive multiple importance sampling: after every stage ALL samples are
// reweighted against the deterministic mixture of every proposal used so
// far, and the proposal adapts to the weighted ensemble.
WeightedEnsemble run_amis(const AmisTarget& target, const AmisConfig& config);

// (sum w)^2 / sum w^2 on nonnegative weights.
double effective_sample_size(const VectorXd& weights);

// Weighted mean/covariance update with ridge regularization
// (epsilon = 1e-6 * trace / dim); appends to the proposal history.
ProposalState adapt_proposal(const WeightedEnsemble& ensemble, const ProposalState& state);

// Mixture of conditional marginals on a common grid (union range).
MarginalGrid mix_marginals(const WeightedEnsemble& ensemble, const std::string& name,
                           int points = 201);

// Weighted mixture moments of a per-fit latent summary.
CoefSummary mixed_coefficient_summary(const WeightedEnsemble& ensemble, const std::string& name);

struct ComponentSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, lo = 0.0, hi = 0.0;  // 95% weighted interval
};

std::vector<ComponentSummary> sample_posterior_theta_c(const WeightedEnsemble& ensemble,
                                                       const std::vector<std::string>& names);

// (empirical probability i/M, cumulative weight of the i smallest sampled
// values); near-diagonal signals reliable weights.
std::vector<std::pair<double, double>> weight_diagnostic_curve(const WeightedEnsemble& ensemble,
                                                               int component);

// Proposal seeded from per-group sample variances: mean_i = log(1/S^2_i),
// diagonal covariance scale*|log(1/S^2_i)| floored at 0.05.
ProposalState init_proposal_from_data(const VectorXd& group_sample_variances, double scale = 0.05);

// Evaluates the conditional log marginal likelihood at random permutations
// of the candidate mean (identity first; first-encountered maximum wins) and
// returns the proposal centered at the best permutation. Diagonal covariance
// entries travel with their components.
ProposalState permutation_search_init(const ProposalState& candidate, const AmisTarget& target,
                                      int n_perm, std::uint64_t seed);

}  // namespace dhglm
