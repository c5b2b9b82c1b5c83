#include "dhglm/conditional.hpp"

namespace dhglm {

ConditionalTarget::ConditionalTarget(DhglmSpec spec, Dataset data, ConditioningPlan plan)
    : spec_(std::move(spec)), data_(std::move(data)), plan_(std::move(plan)) {
  validate_against(spec_, data_);

  mean_design_ = build_design(spec_.mean, data_, false);
  bool disp_per_group = spec_.family != Family::NegativeBinomial;
  disp_design_ = build_design(spec_.dispersion, data_, disp_per_group);

  auto priors = [&](const LinearPredictor& pred, VectorXd& m, VectorXd& q,
                    std::vector<std::string>& names) {
    m.resize((Eigen::Index)pred.terms.size());
    q.resize((Eigen::Index)pred.terms.size());
    for (size_t j = 0; j < pred.terms.size(); ++j) {
      NormalPrior pr = spec_.prior_for(pred.terms[j].coef_name);
      m[(Eigen::Index)j] = pr.mean;
      q[(Eigen::Index)j] = pr.precision;
      names.push_back(pred.terms[j].coef_name);
    }
  };
  priors(spec_.mean, mean_prior_mean_, mean_prior_prec_, mean_coef_names_);
  priors(spec_.dispersion, disp_prior_mean_, disp_prior_prec_, disp_coef_names_);

  if (spec_.mean.random_effect && !spec_.mean.random_effect->loading_column.empty())
    loading_ = data_.col(spec_.mean.random_effect->loading_column);
  if (spec_.mean.use_dataset_offset) offset_ = *data_.offset;
}

double ConditionalTarget::log_prior(const VectorXd& theta) const {
  if ((int)theta.size() != plan_.dim()) throw dhglm_error("theta dimension mismatch");
  if (plan_.kind == PlanKind::GroupLogPrecisions) return 0.0;  // pi(tau_i) = 1
  double lp = 0.0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    double m = disp_prior_mean_[j], q = disp_prior_prec_[j];
    lp += 0.5 * (std::log(q) - kLog2Pi) - 0.5 * q * (theta[j] - m) * (theta[j] - m);
  }
  return lp;
}

std::vector<LatentGaussianSubproblem> ConditionalTarget::instantiate(const VectorXd& theta) const {
  if ((int)theta.size() != plan_.dim()) throw dhglm_error("theta dimension mismatch");
  std::vector<LatentGaussianSubproblem> subs;

  auto mean_subproblem = [&]() {
    LatentGaussianSubproblem sub;
    sub.family = spec_.family;
    sub.y = data_.y;
    sub.offset = offset_;
    sub.X = mean_design_;
    sub.coef_names = mean_coef_names_;
    sub.prior_mean = mean_prior_mean_;
    sub.prior_precision = mean_prior_prec_;
    if (spec_.mean.random_effect) {
      LatentGaussianSubproblem::ReBlock re;
      re.name = spec_.mean.random_effect->name;
      re.group = data_.group;
      re.loading = loading_;
      re.n_groups = data_.n_groups;
      sub.re = re;
      if (spec_.mean.random_effect->precision_model == RePrecisionModel::FreeScalar) {
        FreeHyperparameter fh;
        fh.role = FreeHyperparameter::Role::RandomEffectPrecision;
        fh.prior = spec_.mean.random_effect->precision_prior;
        fh.name = "tau_" + spec_.mean.random_effect->name;
        sub.free_hyper = fh;
      }
    }
    sub.detailed_marginals = detailed_marginals;
    sub.include_random_effect_summaries = include_random_effect_summaries;
    return sub;
  };

  if (plan_.kind == PlanKind::DispersionCoefficients) {
    // theta are the dispersion coefficients; nuisance values follow.
    VectorXd eta_d = disp_design_ * theta;
    LatentGaussianSubproblem sub = mean_subproblem();
    switch (spec_.family) {
      case Family::Poisson:
        sub.re->precision = eta_d.array().exp().matrix();  // per-group tau
        break;
      case Family::NegativeBinomial:
        sub.nb_size = eta_d.array().exp().matrix();  // per-observation size
        break;
      case Family::Gaussian: {
        sub.obs_precision.resize(data_.n());
        for (Eigen::Index i = 0; i < data_.n(); ++i)
          sub.obs_precision[i] = std::exp(eta_d[data_.group[i]]);
        break;
      }
    }
    subs.push_back(std::move(sub));
    return subs;
  }

  // GroupLogPrecisions: theta holds log tau per group.
  LatentGaussianSubproblem obs = mean_subproblem();
  obs.obs_precision.resize(data_.n());
  for (Eigen::Index i = 0; i < data_.n(); ++i)
    obs.obs_precision[i] = std::exp(theta[data_.group[i]]);
  subs.push_back(std::move(obs));

  LatentGaussianSubproblem disp;
  disp.family = Family::Gaussian;
  disp.y = theta;  // pseudo-response log(tau)
  disp.X = disp_design_;
  disp.coef_names = disp_coef_names_;
  disp.prior_mean = disp_prior_mean_;
  disp.prior_precision = disp_prior_prec_;
  disp.obs_precision = VectorXd::Ones(plan_.dim());
  FreeHyperparameter fh;
  fh.role = FreeHyperparameter::Role::ObservationPrecisionScale;
  fh.prior = spec_.dispersion.random_effect->precision_prior;
  fh.name = "tau_" + spec_.dispersion.random_effect->name;
  disp.free_hyper = fh;
  disp.detailed_marginals = detailed_marginals;
  subs.push_back(std::move(disp));
  return subs;
}

ConditionalFit ConditionalTarget::fit(const VectorXd& theta) const {
  ConditionalFit merged;
  merged.log_marginal = 0.0;
  merged.converged = true;
  for (const auto& sub : instantiate(theta)) {
    ConditionalFit f = fit_subproblem(sub);
    merged.log_marginal += f.log_marginal;
    merged.newton_iterations = std::max(merged.newton_iterations, f.newton_iterations);
    merged.converged = merged.converged && f.converged;
    for (auto& [name, s] : f.latent) merged.latent[name] = s;
    for (auto& [name, g] : f.marginals) merged.marginals[name] = std::move(g);
  }
  return merged;
}

double ConditionalTarget::log_target(const VectorXd& theta, ConditionalFit* out) const {
  ConditionalFit f = fit(theta);
  if (!f.converged)
    throw dhglm_error("inner Newton solve did not converge; rejecting this theta");
  double lt = f.log_marginal + log_prior(theta);
  if (out) *out = std::move(f);
  return lt;
}

}  // namespace dhglm
