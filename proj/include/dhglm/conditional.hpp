#pragma once

#include "dhglm/latent_fitter.hpp"
#include "dhglm/model_spec.hpp"

namespace dhglm {

// Unnormalized log target over the conditioning parameters, evaluated by
// fitting the conditional submodels. Implementations must be safe to call
// from several workers at once.
struct AmisTarget {
  virtual ~AmisTarget() = default;
  virtual int dim() const = 0;
  // log pi(D | theta_c) + log pi(theta_c) on the sampling scale; when `fit`
  // is non-null it receives the merged conditional fit.
  virtual double log_target(const VectorXd& theta, ConditionalFit* fit) const = 0;
};

// Conditional DHGLM target: instantiates the plan's submodels at a fixed
// theta_c, fits each with the latent fitter, and sums their log marginal
// likelihoods (two-submodel plans are additive by construction).
class ConditionalTarget : public AmisTarget {
 public:
  ConditionalTarget(DhglmSpec spec, Dataset data, ConditioningPlan plan);

  int dim() const override { return plan_.dim(); }
  double log_target(const VectorXd& theta, ConditionalFit* fit) const override;

  double log_prior(const VectorXd& theta) const;
  // The merged fit; fit.log_marginal is the sum over submodels.
  ConditionalFit fit(const VectorXd& theta) const;
  std::vector<LatentGaussianSubproblem> instantiate(const VectorXd& theta) const;

  const ConditioningPlan& plan() const { return plan_; }
  const DhglmSpec& spec() const { return spec_; }
  const Dataset& data() const { return data_; }

  // Fit options applied to every submodel.
  bool detailed_marginals = false;
  bool include_random_effect_summaries = false;

 private:
  DhglmSpec spec_;
  Dataset data_;
  ConditioningPlan plan_;

  MatrixXd mean_design_;  // n x p
  MatrixXd disp_design_;  // per group (Gaussian/Poisson) or per obs (NB)
  VectorXd mean_prior_mean_, mean_prior_prec_;
  VectorXd disp_prior_mean_, disp_prior_prec_;
  std::vector<std::string> mean_coef_names_, disp_coef_names_;
  VectorXd loading_;  // mean random-effect loadings (empty -> intercepts)
  VectorXd offset_;
};

}  // namespace dhglm
