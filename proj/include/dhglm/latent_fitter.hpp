#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "dhglm/model_spec.hpp"
#include "dhglm/util.hpp"

namespace dhglm {

// Posterior density of one scalar on a grid.
struct MarginalGrid {
  enum class Scale { Identity, LogTransformed };
  VectorXd x;        // strictly increasing abscissae
  VectorXd density;  // nonnegative
  Scale scale = Scale::Identity;

  double integral() const { return trapezoid(x, density); }
  void normalize();
  double mean() const;
  double sd() const;
  double mode() const;
  // 0 outside the grid range
  double at(double v) const { return interp_linear(x, density, v); }
};

MarginalGrid make_gaussian_grid(double mean, double sd, int points = 61, double half_width = 6.0);

struct MonotoneMap {
  std::function<double(double)> forward;
  std::function<double(double)> deriv;
};

MonotoneMap exp_map();
MonotoneMap log_map();
MonotoneMap identity_map();

// Change of variables with the Jacobian correction.
MarginalGrid transform_marginal(const MarginalGrid& grid, const MonotoneMap& map);

struct CoefSummary {
  double mean = 0.0;
  double sd = 0.0;
};

struct ConditionalFit {
  double log_marginal = -std::numeric_limits<double>::infinity();
  std::map<std::string, CoefSummary> latent;     // posterior mean/sd per latent coefficient
  std::map<std::string, MarginalGrid> marginals; // explicitly gridded marginals
  int newton_iterations = 0;
  bool converged = false;

  bool has_marginal(const std::string& name) const {
    return marginals.count(name) > 0 || latent.count(name) > 0;
  }
  // Stored grid if present, otherwise the Gaussian approximation from the
  // latent summary.
  MarginalGrid marginal_grid(const std::string& name, int points = 61) const;
};

struct FreeHyperparameter {
  enum class Role {
    RandomEffectPrecision,      // scalar precision of the random-effect block
    ObservationPrecisionScale,  // Gaussian likelihood: w_i = tau * base_i
  };
  Role role = Role::RandomEffectPrecision;
  GammaPrior prior;
  std::string name = "tau";  // marginal is stored as "log_<name>"
};

// A latent-Gaussian model with all nuisance values fixed, except for at most
// one free precision hyperparameter handled by 1-D quadrature.
struct LatentGaussianSubproblem {
  Family family = Family::Gaussian;
  VectorXd y;
  VectorXd offset;  // empty -> zero

  MatrixXd X;  // n x p fixed-effect design
  std::vector<std::string> coef_names;
  VectorXd prior_mean;       // p
  VectorXd prior_precision;  // p; an entry of 0 means a flat prior

  VectorXd obs_precision;  // Gaussian: length n
  VectorXd nb_size;        // NegativeBinomial: length n

  struct ReBlock {
    std::string name = "u";
    VectorXi group;     // n
    VectorXd loading;   // empty -> all ones (random intercepts)
    int n_groups = 0;
    VectorXd precision;  // per-group; ignored when the free hyperparameter owns it
  };
  std::optional<ReBlock> re;

  std::optional<FreeHyperparameter> free_hyper;

  // Fit options
  bool include_random_effect_summaries = false;
  bool detailed_marginals = true;  // grid coefficient marginals in quadrature fits
  int max_newton_iterations = 50;
  double newton_tolerance = 1e-8;

  Eigen::Index n_obs() const { return y.size(); }
  Eigen::Index n_fixed() const { return X.cols(); }
  Eigen::Index latent_dim() const { return n_fixed() + (re ? re->n_groups : 0); }
};

// Exact conjugate Gaussian integration; requires a Gaussian likelihood with
// known observation precisions and no free hyperparameter.
ConditionalFit fit_gaussian_exact(const LatentGaussianSubproblem& sub);

// Safeguarded Newton to the latent mode plus the Laplace approximation of
// the marginal likelihood. Exact when the likelihood is Gaussian.
ConditionalFit fit_laplace(const LatentGaussianSubproblem& sub);

// Grid quadrature over the log of the single free precision; the inner model
// at each node is fit exactly (Gaussian) or by Laplace.
ConditionalFit fit_with_hyperparameter(const LatentGaussianSubproblem& sub);

// Dispatch on the presence of a free hyperparameter and the family.
ConditionalFit fit_subproblem(const LatentGaussianSubproblem& sub);

// Penalized log-likelihood objective and its analytic gradient at a latent
// configuration (exposed for finite-difference checks).
double penalized_objective(const LatentGaussianSubproblem& sub, const VectorXd& latent);
VectorXd penalized_gradient(const LatentGaussianSubproblem& sub, const VectorXd& latent);

}  // namespace dhglm
